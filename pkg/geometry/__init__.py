# Ribbon geometry module
