"""对抗训练、预训练、命令工作流与流水线"""
