# mpbridge test suite
