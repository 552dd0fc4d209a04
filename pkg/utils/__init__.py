"""异常、配置、日志、检查点与报告"""
