# Presentation Layer - command-line front end
# Parses flags, configures logging and maps use-case results to exit codes
