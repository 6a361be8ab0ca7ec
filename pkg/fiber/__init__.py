# Fiber integration module
