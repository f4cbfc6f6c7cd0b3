"""
Pacote de utilitários do somforge.
"""
