# conftest.py
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Eckart 势上的完整极点展开，运行时间以分钟计")
