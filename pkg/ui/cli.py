"""
Command Line Interface for MiniHAC.
Subcommands: cluster, gen, verify, bench.
Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""
import argparse
import os
import sys
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from colorama import Fore, Style, init
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from core.chain_engine import run
from core.config import Config
from core.datasets import GENERATORS, generate, sample_gaussian_disc
from core.errors import HACError, RefusedError, VerificationFailure
from core.linkage import LinkageKind
from core.oracle import compare_cophenetic, naive_hac
from core.spatial import DEFAULT_LEAF_CAPACITY, PointSet
from utils.file_manager import FileManager
from utils.logger import RunLogger
from utils.memory_monitor import PeakMemoryMonitor
from utils.point_io import (parse_points, read_linkage, stats_text, write_labels, write_linkage,
                            write_points, write_stats)

# Initialize colorama for cross-platform colored terminal output
init()

SYSTEM_PROMPT = f"{Fore.YELLOW}System>{Style.RESET_ALL} "
OK_PROMPT = f"{Fore.GREEN}OK>{Style.RESET_ALL} "
ERROR_PROMPT = f"{Fore.RED}Error>{Style.RESET_ALL} "

BENCH_COLUMNS = ["dataset", "linkage", "cache_size", "threads", "seconds", "speedup", "rounds", "peak_rss_mb",
                 "digest"]


class UsageError(HACError):
    """Bad command-line usage."""

    code = "USAGE"
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so usage errors map to exit code 1."""

    def error(self, message: str):
        raise UsageError(message)


class RunConfig(BaseModel):
    """一次聚类运行的配置模型"""

    input: Optional[str] = Field(None, description="输入点文件路径")
    kind: str = Field("uniform", description="未给出输入文件时生成的数据集类型")
    n: Optional[int] = Field(None, description="未给出输入文件时生成的点数")
    dims: int = Field(2, description="生成数据集的维度")
    linkage: LinkageKind = Field(LinkageKind.WARD, description="链接方式：comp/ward/avg1/avg2")
    cache_size: int = Field(0, description="每个簇的距离缓存容量 s")
    threads: int = Field(1, description="工作线程数")
    output: Optional[str] = Field(None, description="树状图输出路径")
    stats: Optional[str] = Field(None, description="统计报告输出路径")
    seed: Optional[int] = Field(None, description="生成数据集的随机种子")
    leaf_capacity: int = Field(DEFAULT_LEAF_CAPACITY, description="kd-tree 叶子容量")
    range_search: bool = Field(True, description="是否使用球形范围查询")

    @field_validator("linkage", mode="before")
    @classmethod
    def _parse_linkage(cls, value):
        return LinkageKind.parse(value)

    @field_validator("cache_size")
    @classmethod
    def _check_cache_size(cls, value: int) -> int:
        if value < 0:
            raise ValueError("cache size must be >= 0")
        return value

    @field_validator("threads", "leaf_capacity", "dims")
    @classmethod
    def _check_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @classmethod
    def from_args(cls, args: argparse.Namespace, config: Config) -> "RunConfig":
        """命令行参数优先，其次配置文件，最后默认值"""
        linkage = LinkageKind.parse(getattr(args, "linkage", None) or LinkageKind.WARD)
        cache_size = getattr(args, "cache_size", None)
        threads = getattr(args, "threads", None)
        return cls(
            input=getattr(args, "input", None),
            kind=getattr(args, "kind", None) or "uniform",
            n=getattr(args, "n", None),
            dims=2 if getattr(args, "dims", None) is None else args.dims,
            linkage=linkage,
            cache_size=config.cache_size_for(linkage) if cache_size is None else cache_size,
            threads=int(config.get("engine", "threads", 1)) if threads is None else threads,
            output=getattr(args, "output", None),
            stats=getattr(args, "stats", None),
            seed=getattr(args, "seed", None),
            leaf_capacity=int(config.get("engine", "leaf_capacity", DEFAULT_LEAF_CAPACITY)),
            range_search=bool(config.get("engine", "range_search", True)) and not getattr(args, "no_range_search", False),
        )


@dataclass
class BenchRow:
    dataset: str
    linkage: str
    cache_size: int
    threads: int
    seconds: float
    speedup: float
    rounds: int
    peak_rss_mb: float
    digest: str

    def values(self) -> List[str]:
        return [self.dataset, self.linkage, str(self.cache_size), str(self.threads),
                f"{self.seconds:.6f}", f"{self.speedup:.3f}", str(self.rounds), f"{self.peak_rss_mb:.1f}",
                self.digest]


class HACCli:
    """Runs one subcommand with shared configuration, logging and result storage."""

    def __init__(self, config: Config, verbose: bool = False):
        self.config = config
        self.verbose = verbose
        self.run_logger = RunLogger(config.get("logging", "log_dir") or None,
                                    config.get("logging", "level", "INFO"))
        self.file_manager = FileManager(config.get("output", "results_dir") or None)

    def _say(self, message: str, prompt: str = SYSTEM_PROMPT) -> None:
        print(f"{prompt}{message}")

    def _load_points(self, rc: RunConfig, command: str) -> PointSet:
        """Read ``--input``, or generate ``--n`` points from ``--kind``/``--dims``/``--seed``."""
        if rc.input:
            return parse_points(rc.input)
        if rc.n is None:
            raise UsageError(f"{command} needs --input or --n")
        logger.info(f"{command}: generating {rc.kind} n={rc.n} d={rc.dims} seed={rc.seed}")
        return generate(rc.kind, rc.n, rc.dims, rc.seed)

    def _source_name(self, rc: RunConfig) -> str:
        return rc.input or f"{rc.kind}:n={rc.n}:d={rc.dims}:seed={rc.seed}"

    # ---- cluster -------------------------------------------------------------

    def cmd_cluster(self, rc: RunConfig) -> int:
        points = self._load_points(rc, "cluster")
        self.run_logger.log_system_event(
            "聚类开始", f"input={self._source_name(rc)} n={points.n} d={points.d} linkage={rc.linkage.value} "
                        f"s={rc.cache_size} threads={rc.threads}")
        result = run(points, rc.linkage, rc.cache_size, rc.threads, rc.leaf_capacity, rc.range_search)

        output = rc.output or self.file_manager.path_for("linkage.txt")
        stats_path = rc.stats or os.path.splitext(output)[0] + ".stats.txt"
        write_linkage(output, result.dendrogram)
        write_stats(stats_path, result.stats)
        for record in result.stats.per_round:
            self.run_logger.log_round(record.index, record.terminals, record.active, record.merges)
        self.run_logger.log_system_event("聚类完成", f"linkage={output} stats={stats_path}")

        stats = result.stats
        self._say(f"{points.n} points, {stats.rounds} rounds, "
                  f"{stats.total_time:.3f}s -> {output}", OK_PROMPT)
        if self.verbose:
            print(stats_text(stats), end="")
        return 0

    # ---- gen -------------------------------------------------------------------

    def cmd_gen(self, args: argparse.Namespace) -> int:
        if args.n is None:
            raise UsageError("gen needs --n")
        output = args.output or self.file_manager.path_for(f"{args.kind}_{args.n}_{args.dims}d.txt")
        if args.kind == "gaussian":
            sample = sample_gaussian_disc(args.n, args.dims, args.seed)
            points = sample.points
            if args.labels:
                write_labels(args.labels, sample.labels)
        else:
            if args.labels:
                raise UsageError("--labels is only available for --kind gaussian")
            points = generate(args.kind, args.n, args.dims, args.seed)
        write_points(output, points)
        self.run_logger.log_system_event("生成数据", f"kind={args.kind} n={args.n} d={args.dims} seed={args.seed}")
        self._say(f"{points.n} {args.kind} points -> {output}", OK_PROMPT)
        return 0

    # ---- verify ----------------------------------------------------------------

    def cmd_verify(self, rc: RunConfig, dendrogram_path: Optional[str] = None) -> int:
        points = self._load_points(rc, "verify")
        limit = int(self.config.get("verify", "max_points", 4096))
        if points.n > limit:
            logger.warning(f"verify refused: n={points.n} > max_points={limit}")
            raise RefusedError(f"n={points.n} exceeds the brute-force limit of {limit}; "
                               f"verify a subsample or raise [verify] max_points")
        rtol = float(self.config.get("verify", "rtol", 1e-9))

        if dendrogram_path:
            candidate = read_linkage(dendrogram_path, points.n)
            source = dendrogram_path
        else:
            candidate = run(points, rc.linkage, rc.cache_size, rc.threads, rc.leaf_capacity,
                            rc.range_search).dendrogram
            source = "engine"
        reference = naive_hac(points, rc.linkage)
        deviation, first = compare_cophenetic(candidate, reference, rtol)

        print(f"source {source}")
        print(f"linkage {rc.linkage.value}")
        print(f"n {points.n}")
        print(f"max_relative_deviation {deviation!r}")
        self.run_logger.log_system_event("校验", f"source={source} deviation={deviation!r}")
        if first is not None:
            print(f"first_differing_pair {first[0]} {first[1]}")
            print(f"{Fore.RED}FAIL{Style.RESET_ALL}")
            raise VerificationFailure(f"cophenetic matrices differ at pair {first} (max deviation {deviation:.3e})")
        print(f"{Fore.GREEN}PASS{Style.RESET_ALL}")
        return 0

    # ---- bench -----------------------------------------------------------------

    def _bench_datasets(self, args: argparse.Namespace) -> Dict[str, PointSet]:
        if args.input:
            return {os.path.basename(path): parse_points(path) for path in args.input}
        if args.n is None:
            raise UsageError("bench needs --input files or --n for a generated dataset")
        name = f"{args.kind}_{args.n}_{args.dims}d"
        return {name: generate(args.kind, args.n, args.dims, args.seed)}

    def run_bench(self,
                  datasets: Dict[str, PointSet],
                  linkages: Sequence[str],
                  cache_sizes: Optional[Sequence[int]],
                  threads: Sequence[int],
                  repeats: int,
                  leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> List[BenchRow]:
        """Minimum-of-``repeats`` wall time for every grid cell, with self-relative speedup.

        The peak resident memory of a cell is the largest RSS sampled over its runs.
        """
        cells = []
        for name, points in datasets.items():
            for linkage in linkages:
                kind = LinkageKind.parse(linkage)
                sizes = cache_sizes if cache_sizes is not None else [self.config.cache_size_for(kind)]
                for size in sizes:
                    for count in threads:
                        cells.append((name, points, kind, int(size), int(count)))

        rows: List[BenchRow] = []
        for name, points, kind, size, count in tqdm(cells, desc="bench", unit="cell", disable=not cells):
            best, peak = float("inf"), 0.0
            digest, rounds = "", 0
            for _ in range(repeats):
                with PeakMemoryMonitor() as memory:
                    start = time.perf_counter()
                    result = run(points, kind, size, count, leaf_capacity)
                    best = min(best, time.perf_counter() - start)
                peak = max(peak, memory.peak_mb)
                digest, rounds = result.dendrogram.digest()[:16], result.stats.rounds
            rows.append(BenchRow(name, kind.value, size, count, best, 1.0, rounds, peak, digest))

        # Speedup relative to the single-thread cell (or the fewest threads) of each group.
        groups: Dict[tuple, List[BenchRow]] = {}
        for row in rows:
            groups.setdefault((row.dataset, row.linkage, row.cache_size), []).append(row)
        for group in groups.values():
            base = min(group, key=lambda r: r.threads)
            for row in group:
                row.speedup = base.seconds / row.seconds if row.seconds > 0 else float("nan")
        return rows

    def cmd_bench(self, args: argparse.Namespace) -> int:
        datasets = self._bench_datasets(args)
        repeats = args.repeats or int(self.config.get("bench", "repeats", 3))
        threads = args.threads if args.threads is not None else [int(self.config.get("engine", "threads", 1))]
        rows = self.run_bench(datasets, args.linkage, args.cache_size, threads, repeats,
                              int(self.config.get("engine", "leaf_capacity", DEFAULT_LEAF_CAPACITY)))

        output = args.output or self.file_manager.path_for("bench.tsv")
        lines = ["\t".join(BENCH_COLUMNS)] + ["\t".join(row.values()) for row in rows]
        self.file_manager.save_file_to_path("\n".join(lines) + "\n", output)

        table = Table(title="MiniHAC bench")
        for column in BENCH_COLUMNS:
            table.add_column(column)
        for row in rows:
            table.add_row(*row.values())
        Console().print(table)
        self.run_logger.log_system_event("基准测试", f"{len(rows)} cells -> {output}")
        self._say(f"{len(rows)} cells -> {output}", OK_PROMPT)
        return 0

    # ---- dispatch ----------------------------------------------------------------

    def dispatch(self, args: argparse.Namespace) -> int:
        self.run_logger.create_log_file()
        self.run_logger.log_system_event("命令", args.command)
        try:
            if args.command == "gen":
                return self.cmd_gen(args)
            if args.command == "bench":
                return self.cmd_bench(args)
            rc = RunConfig.from_args(args, self.config)
            if args.command == "cluster":
                return self.cmd_cluster(rc)
            return self.cmd_verify(rc, args.dendrogram)
        finally:
            self.run_logger.save_complete_log()


def _add_generated_input(parser: argparse.ArgumentParser) -> None:
    """Flags that replace ``--input`` with a generated dataset."""
    parser.add_argument("--kind", "-k", choices=sorted(GENERATORS), default="uniform",
                        help="Generated dataset kind (without --input)")
    parser.add_argument("--n", type=int, help="Generated dataset size (without --input)")
    parser.add_argument("--dims", "-d", type=int, default=2, help="Generated dataset dimensionality")
    parser.add_argument("--seed", type=int, default=None, help="Generated dataset seed")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser.

    Returns:
        The parser with the four subcommands
    """
    parser = _Parser(prog="minihac", description="MiniHAC: parallel nearest-neighbor-chain HAC")
    parser.add_argument("--config", "-c", help="Path to a TOML configuration file")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    linkages = [kind.value for kind in LinkageKind]

    cluster = sub.add_parser("cluster", help="Cluster a point file and write its dendrogram")
    cluster.add_argument("--input", "-i", help="Point file")
    cluster.add_argument("--output", "-o", help="Linkage-matrix output path")
    cluster.add_argument("--stats", help="Stats report path (default: next to the output)")
    cluster.add_argument("--linkage", "-l", choices=linkages, default="ward", help="Linkage criterion")
    cluster.add_argument("--cache-size", "-s", type=int, help="Per-cluster cache capacity")
    cluster.add_argument("--threads", "-t", type=int, help="Worker threads")
    cluster.add_argument("--no-range-search", action="store_true",
                         help="Scan every active cluster instead of range queries")
    _add_generated_input(cluster)

    gen = sub.add_parser("gen", help="Generate a synthetic point file",
                         description="uniform: n points in [0, sqrt(n)]^d. gaussian: 90%% of the points in "
                                     "five Gaussian blobs (std sqrt(n)/6, so the sqrt(n) diameter holds ~99%% "
                                     "of each blob) with means in [0, 5 sqrt(n)]^d; the rest uniform.")
    gen.add_argument("--kind", "-k", choices=sorted(GENERATORS), default="uniform", help="Dataset kind")
    gen.add_argument("--n", type=int, help="Number of points")
    gen.add_argument("--dims", "-d", type=int, default=2, help="Dimensionality")
    gen.add_argument("--seed", type=int, default=None, help="Random seed")
    gen.add_argument("--output", "-o", help="Point file output path")
    gen.add_argument("--labels", help="Write GaussianDisc blob labels (-1 = background) to this path")

    verify = sub.add_parser("verify", help="Compare the engine against the brute-force oracle")
    verify.add_argument("--input", "-i", help="Point file")
    verify.add_argument("--linkage", "-l", choices=linkages, default="ward", help="Linkage criterion")
    verify.add_argument("--cache-size", "-s", type=int, help="Per-cluster cache capacity")
    verify.add_argument("--threads", "-t", type=int, help="Worker threads")
    verify.add_argument("--dendrogram", help="Check this linkage file instead of running the engine")
    _add_generated_input(verify)

    bench = sub.add_parser("bench", help="Time a grid of (dataset, linkage, cache size, threads)")
    bench.add_argument("--input", "-i", nargs="*", help="Point files")
    bench.add_argument("--kind", "-k", choices=sorted(GENERATORS), default="uniform", help="Generated dataset kind")
    bench.add_argument("--n", type=int, help="Generated dataset size")
    bench.add_argument("--dims", "-d", type=int, default=2, help="Generated dataset dimensionality")
    bench.add_argument("--seed", type=int, default=0, help="Generated dataset seed")
    bench.add_argument("--linkage", "-l", nargs="*", choices=linkages, default=["ward"], help="Linkages")
    bench.add_argument("--cache-size", "-s", nargs="*", type=int, help="Cache sizes")
    bench.add_argument("--threads", "-t", nargs="*", type=int, help="Thread counts")
    bench.add_argument("--repeats", type=int, help="Runs per cell (minimum is reported)")
    bench.add_argument("--output", "-o", help="TSV output path")
    return parser


def _configure_console(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING",
               format="<level>{level: <7}</level> {message}")
    logger.enable("core")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function to run the CLI."""
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("choose a subcommand: cluster, gen, verify or bench")
        _configure_console(args.verbose)
        cli = HACCli(Config(args.config), args.verbose)
        return cli.dispatch(args)
    except ValidationError as e:
        print(f"{ERROR_PROMPT}{e.errors()[0].get('msg', str(e))}", file=sys.stderr)
        return 1
    except HACError as e:
        print(f"{ERROR_PROMPT}{e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
