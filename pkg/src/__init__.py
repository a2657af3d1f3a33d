# Decoupled Taint Analysis Support Package
