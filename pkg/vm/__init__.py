# Target Virtual Machine Package
