# Cubical homology oracle module
