"""数据清洗、评估指标与评估实验"""
