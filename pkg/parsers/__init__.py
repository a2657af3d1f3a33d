# Assembly and Workload Parsers Package
