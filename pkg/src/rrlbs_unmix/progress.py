"""Progress reporting for sweeps and benchmarks, with rich when available."""

from __future__ import annotations

import logging
from typing import Any

try:  # pragma: no cover - optional dependency
    import rich  # noqa: F401

    _RICH_AVAILABLE = True
except Exception:  # pragma: no cover - optional dependency
    _RICH_AVAILABLE = False


class ProgressReporter:
    """One overall bar counting finished runs (sweep points, bench cells).

    Finished runs are printed as a stable line above the bar.  While the bar
    is live, the ``StreamHandler`` named ``"stream"`` is swapped for a
    ``RichHandler`` on the same console so log lines never tear the bar; the
    original handler comes back on exit.  Without rich every event is a plain
    log line.
    """

    def __init__(
        self,
        total: int,
        logger: logging.Logger,
        label: str = "Running",
        unit: str = "runs",
        use_rich: bool | None = None,
    ) -> None:
        self._logger = logger
        self._total = total
        self._label = label
        self._completed = 0
        self._labels: dict[str, str] = {}
        self._use_rich = _RICH_AVAILABLE if use_rich is None else use_rich and _RICH_AVAILABLE
        self._progress: Any = None
        self._overall_task: Any = None
        self.console: Any = None

        self._target_logger: logging.Logger | None = None
        self._stream_handler: logging.Handler | None = None
        self._rich_handler: Any = None

        if self._use_rich:
            from rich.console import Console
            from rich.progress import (
                BarColumn,
                MofNCompleteColumn,
                Progress,
                SpinnerColumn,
                TextColumn,
                TimeElapsedColumn,
            )

            self.console = Console()
            self._progress = Progress(
                SpinnerColumn(),
                TextColumn(f"[bold blue]{label}"),
                BarColumn(bar_width=40),
                MofNCompleteColumn(),
                TextColumn(unit),
                TimeElapsedColumn(),
                auto_refresh=False,
                console=self.console,
            )
            self._overall_task = self._progress.add_task("overall", total=total)

    @property
    def completed(self) -> int:
        return self._completed

    def _find_stream_handler(self) -> tuple[logging.Logger, logging.Handler] | None:
        candidate: logging.Logger | None = self._logger
        while candidate is not None:
            for handler in candidate.handlers:
                if handler.get_name() == "stream":
                    return candidate, handler
            if not candidate.propagate:
                return None
            candidate = candidate.parent
        return None

    def _install_rich_handler(self) -> None:
        if not self._use_rich or self.console is None:
            return
        found = self._find_stream_handler()
        if found is None:
            return
        from rich.logging import RichHandler

        target, handler = found
        rich_handler = RichHandler(
            console=self.console, show_time=False, show_path=False, markup=False
        )
        rich_handler.setLevel(handler.level)
        rich_handler.set_name("stream_rich")
        target.removeHandler(handler)
        target.addHandler(rich_handler)
        self._target_logger = target
        self._stream_handler = handler
        self._rich_handler = rich_handler

    def _restore_stream_handler(self) -> None:
        if self._target_logger is None:
            return
        if self._rich_handler is not None:
            self._target_logger.removeHandler(self._rich_handler)
            self._rich_handler = None
        if self._stream_handler is not None:
            self._target_logger.addHandler(self._stream_handler)
            self._stream_handler = None
        self._target_logger = None

    def __enter__(self) -> "ProgressReporter":
        if self._progress is not None:
            self._progress.start()
        self._install_rich_handler()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self._restore_stream_handler()
        if self._progress is not None:
            self._progress.stop()

    def add_task(self, key: str, label: str) -> None:
        self._labels[key] = label
        if not self._use_rich:
            self._logger.info("Starting: %s", label)

    def complete(self, key: str, detail: str = "") -> None:
        self._completed += 1
        label = self._labels.get(key, key)
        line = f"{label} {detail}".rstrip()
        if self._progress is not None:
            self._progress.console.print(f"  [green]✓[/green] {line}")
            self._progress.update(self._overall_task, completed=self._completed)
            self._progress.refresh()
        else:
            self._logger.info("Completed %s (%s/%s)", line, self._completed, self._total)
