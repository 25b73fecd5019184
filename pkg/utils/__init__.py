"""
Логирование и вспомогательные функции.
"""
