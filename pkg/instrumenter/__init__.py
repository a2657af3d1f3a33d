# Instrumentation Package: block discovery, record plans and analysis code generation
