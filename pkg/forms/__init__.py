# Zoned differential forms module
