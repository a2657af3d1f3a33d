# Shadow Memory Package
