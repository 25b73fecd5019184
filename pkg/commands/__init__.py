"""
Обработчики подкоманд командной строки.
"""
