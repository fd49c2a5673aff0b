# xvaforge test suite
