# Infrastructure Layer - External implementations
# Contains implementations of interfaces defined in core layer
