# Application Layer - Use Cases
# Contains application-specific business rules and orchestrates domain entities
