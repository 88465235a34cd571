import csv
import io
from typing import Iterable

from src.core.repositories.base import BaseRepository
from src.engine.evaluation import REPORT_COLUMNS

LOSS_COLUMNS = ("step", "loss", "lr")


class CsvRepository(BaseRepository):
    def write_rows(self, path, columns: Iterable[str], rows: Iterable[dict]):
        with open(self._prepare(path), "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)

    def read_rows(self, path) -> list[dict[str, str]]:
        path = self.resolve(path)
        return list(csv.DictReader(io.StringIO(self._read_text(path, "utf-8"), newline="")))

    def write_loss_curve(self, path, curve):
        self.write_rows(
            path,
            LOSS_COLUMNS,
            ({"step": p.step, "loss": f"{p.loss:.8f}", "lr": f"{p.lr:.8e}"} for p in curve),
        )

    def write_reports(self, path, reports):
        self.write_rows(path, REPORT_COLUMNS, (r.as_row() for r in reports))
