"""numpy 神经网络内核与句子编码器"""
