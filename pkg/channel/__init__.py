# Record Channel Package
