"""数据集格式、合成数据与真值表"""
