"""Item I/O reports for raster runs."""
from dataclasses import dataclass

TSV_COLUMNS = ("mode", "N", "items_read", "items_written", "reads_per_n", "writes_per_n")

ATTRIBUTION = (
    "counted: every item moved between a stream file and memory, including "
    "reading A and writing B; generating S1 reads nothing"
)


@dataclass(frozen=True)
class IoReport:
    mode: str
    n: int
    items_read: int
    items_written: int

    @property
    def reads_per_n(self):
        return self.items_read / self.n if self.n else 0.0

    @property
    def writes_per_n(self):
        return self.items_written / self.n if self.n else 0.0

    @property
    def total(self):
        return self.items_read + self.items_written


def io_report(before, after, n, mode="run"):
    """Counter difference of one run as an :class:`IoReport`."""
    d = after - before
    return IoReport(mode, n, d.items_read, d.items_written)


def savings_ratio(baseline, improved):
    """Baseline item I/O divided by improved item I/O (0 when nothing moved)."""
    return baseline.total / improved.total if improved.total else 0.0


def format_tsv(reports):
    lines = ["\t".join(TSV_COLUMNS)]
    for r in reports:
        lines.append(f"{r.mode}\t{r.n}\t{r.items_read}\t{r.items_written}"
                     f"\t{r.reads_per_n:.4f}\t{r.writes_per_n:.4f}")
    return "\n".join(lines) + "\n"


def format_text(reports):
    lines = []
    for r in reports:
        lines.append(
            f"{r.mode:<13} N={r.n:<10} reads={r.items_read:<11} ({r.reads_per_n:.2f}N)  "
            f"writes={r.items_written:<11} ({r.writes_per_n:.2f}N)"
        )
    by_mode = {r.mode: r for r in reports}
    if "materialized" in by_mode and "pipelined" in by_mode:
        ratio = savings_ratio(by_mode["materialized"], by_mode["pipelined"])
        lines.append(f"savings ratio (materialized / pipelined item I/O): {ratio:.2f}")
    lines.append(ATTRIBUTION)
    return "\n".join(lines) + "\n"
