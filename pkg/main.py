"""
MiniHAC 入口程序
并行最近邻链层次聚类的命令行入口
Entry program for MiniHAC
Command-line entry for parallel nearest-neighbor-chain hierarchical clustering

用法 / Usage:
    python main.py cluster --input points.txt --linkage ward --threads 4
    python main.py gen --kind gaussian --n 10000 --dims 2 --seed 1
    python main.py verify --input points.txt --linkage avg1
    python main.py bench --n 20000 --linkage comp ward --threads 1 2 4 8
"""
import sys

from ui.cli import main

if __name__ == "__main__":
    sys.exit(main())
