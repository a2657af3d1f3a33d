# Coupled Oracle Package
