# Cohomology engine module
