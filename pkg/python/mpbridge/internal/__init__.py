# Internal mpbridge implementation details
# These modules are not part of the public API
