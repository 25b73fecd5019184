"""
Предметная логика: майнинг, фичи, разметка, метрики, наборы, обучение и сценарии.
"""
