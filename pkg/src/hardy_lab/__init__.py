"""hardy-lab: a numerical laboratory for second-order divergence-form
elliptic operators with complex bounded coefficients.

Discretizes L = -div(A grad) on a periodic grid and implements the operator
toolkit around it: heat semigroup, holomorphic functional calculus, square
functions, tent spaces, adapted Hardy/BMO norms, molecular decompositions,
Riesz transforms, sharp maximal functions, and the singular-coefficient
experiments that exhibit the sharpness of the L^p boundedness range.
"""

__version__ = "0.1.0"
