# Synchronization and Metrics Package
