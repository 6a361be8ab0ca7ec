# Quadrature and periods module
