"""Integration tests: command pipelines and training experiments"""
