import os
import tempfile

import pandas as pd


def write_csv_atomic(frame, path, logger=None):
    """Write a DataFrame with temp file, verification and atomic replace"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    temp_fd, temp_path = tempfile.mkstemp(suffix='.csv', dir=directory, text=True)

    try:
        with os.fdopen(temp_fd, 'w', encoding='utf-8', newline='') as temp_file:
            frame.to_csv(temp_file, index=False)
            temp_file.flush()
            os.fsync(temp_file.fileno())

        # Verify
        if len(frame.columns):
            written = pd.read_csv(temp_path)
            if len(written) != len(frame):
                raise OSError(f"Verification failed for {path}: "
                              f"{len(written)} rows on disk, {len(frame)} expected")

        os.replace(temp_path, path)

        if logger:
            logger.debug(f"Wrote {len(frame)} rows to {path}")
        return path

    except Exception as e:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        if logger:
            logger.error(f"Error writing {path}: {e}")
        raise


class TraceWriter:
    """Per-slot records, streamed to CSV in chunks or kept in memory when out_dir is None.

    Each streamed table grows in a temp file next to its target; close()
    checks the row count and moves it into place.
    """

    NAMES = ('trace', 'control_trace', 'positions')

    def __init__(self, out_dir=None, chunk_rows=50_000, logger=None):
        self.out_dir = out_dir
        self.chunk_rows = chunk_rows
        self.logger = logger
        self.buffers = {name: [] for name in self.NAMES}
        self.written = {name: 0 for name in self.NAMES}
        self.temp_paths = {}
        self.paths = {}
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    @property
    def streaming(self):
        return bool(self.out_dir)

    def extend(self, name, rows):
        buffer = self.buffers[name]
        buffer.extend(rows)
        if self.streaming and len(buffer) >= self.chunk_rows:
            self._flush(name)

    def rows(self, name):
        """Rows still held in memory (all of them when not streaming)"""
        return self.buffers[name]

    def _flush(self, name):
        buffer = self.buffers[name]
        if not buffer:
            return
        if name not in self.temp_paths:
            temp_fd, temp_path = tempfile.mkstemp(suffix='.csv', dir=self.out_dir, text=True)
            os.close(temp_fd)
            self.temp_paths[name] = temp_path

        with open(self.temp_paths[name], 'a', encoding='utf-8', newline='') as temp_file:
            pd.DataFrame(buffer).to_csv(temp_file, header=self.written[name] == 0, index=False)
            temp_file.flush()
            os.fsync(temp_file.fileno())
        self.written[name] += len(buffer)
        buffer.clear()

    def close(self):
        """Flush, verify and move every streamed table into place; returns {name: path}"""
        if not self.streaming:
            return {}
        try:
            for name in self.NAMES:
                self._flush(name)
            for name, temp_path in list(self.temp_paths.items()):
                with open(temp_path, encoding='utf-8') as temp_file:
                    lines = sum(1 for _ in temp_file)
                if lines - 1 != self.written[name]:
                    raise OSError(f"Verification failed for {name}: "
                                  f"{lines - 1} rows on disk, {self.written[name]} expected")
                path = os.path.join(self.out_dir, f'{name}.csv')
                os.replace(temp_path, path)
                del self.temp_paths[name]
                self.paths[name] = path
                if self.logger:
                    self.logger.debug(f"Streamed {self.written[name]} rows to {path}")
        except Exception as e:
            self.discard()
            if self.logger:
                self.logger.error(f"Error closing trace files in {self.out_dir}: {e}")
            raise
        return dict(self.paths)

    def discard(self):
        for temp_path in self.temp_paths.values():
            if os.path.exists(temp_path):
                os.remove(temp_path)
        self.temp_paths.clear()


def write_run_outputs(summary, out_dir, logger=None):
    """All CSV files of one run; returns {name: path}"""
    outputs = {
        'summary': summary.summary_frame(),
        'gpd_fit': summary.fit_frame(),
        'ccdf_queue': summary.ccdf_queue,
        'ccdf_aoi': summary.ccdf_aoi,
        'ccdf_excess': summary.ccdf_excess,
        'excess_samples': pd.DataFrame({'excess': summary.excess if summary.excess is not None else []}),
        'assignments': pd.DataFrame(summary.assignments, columns=['slot', 'epoch', 'pair', 'group', 'rbs']),
    }
    if summary.trace:
        outputs['trace'] = pd.DataFrame(summary.trace)
    if summary.control_trace:
        outputs['control_trace'] = pd.DataFrame(summary.control_trace)
    if summary.positions:
        outputs['positions'] = pd.DataFrame(summary.positions)

    paths = {}
    for name, frame in outputs.items():
        if frame is None:
            continue
        paths[name] = write_csv_atomic(frame, os.path.join(out_dir, f'{name}.csv'), logger)

    paths.update(summary.trace_files)

    if logger:
        logger.info(f"Wrote {len(paths)} files to {out_dir}")
    return paths


def read_excess(path):
    """Excess samples from a dump: the 'excess' column, or the first column"""
    frame = pd.read_csv(path)
    column = 'excess' if 'excess' in frame.columns else frame.columns[0]
    return frame[column].dropna().to_numpy(dtype=float)
