# Mappers package
