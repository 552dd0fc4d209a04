"""DSGAN 测试包"""
