# Constructible expression kernel module
