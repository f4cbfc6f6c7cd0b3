# Pacote src 