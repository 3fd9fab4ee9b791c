"""CSV, PPM heatmap, tensor and metadata writers."""
import hashlib
from pathlib import Path

import numpy as np

from .tensor import as_tensor

TENSOR_MAGIC = b"SCNT1\n"

# blue -> cyan -> yellow -> red at t = 0, 1/3, 2/3, 1
_STOPS = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
_COLORS = np.array([
    [0.0, 0.0, 255.0],
    [0.0, 255.0, 255.0],
    [255.0, 255.0, 0.0],
    [255.0, 0.0, 0.0],
])


def _open_for_write(path, mode="w"):
    try:
        if "b" in mode:
            return open(path, mode)
        return open(path, mode, newline="\n", encoding="ascii")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e


def write_sweep_csv(report, path):
    rows = sorted(report.rows, key=lambda r: r.sigma)
    with _open_for_write(path) as fh:
        fh.write("sigma,images,correct,accuracy\n")
        for r in rows:
            fh.write(f"{r.sigma:g},{r.images_evaluated},{r.correct},{r.accuracy:.4f}\n")


ATTACK_HEADER = "index,label,target,success,iterations,noise_norm,ratio,coverage,noise_sha1"


def attack_row(index, label, result, image_norm, cov):
    """One CSV row for an attack result; the digest pins the noise bit for bit."""
    norm = float(np.linalg.norm(result.noise))
    digest = hashlib.sha1(np.ascontiguousarray(result.noise, dtype="<f8").tobytes()).hexdigest()
    ratio = norm / image_norm if image_norm else float("inf")
    return (f"{index},{label},{result.target},{int(bool(result.success))},{result.iterations},"
            f"{norm:.17g},{ratio:.17g},{cov:.6f},{digest}")


def write_attack_csv(rows, path):
    with _open_for_write(path) as fh:
        fh.write(ATTACK_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")


def colormap(t):
    """Map values in [0, 1] to 8-bit RGB along the piecewise-linear ramp."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([np.interp(t, _STOPS, _COLORS[:, ch]) for ch in range(3)], axis=-1)
    # snap interpolation residue (t=0.5 gives 127.49999...) before rounding half up
    return np.floor(np.round(rgb, 9) + 0.5).astype(np.uint8)


def heatmap_rgb(grid):
    g = as_tensor(grid)
    if g.ndim != 2:
        raise ValueError(f"heatmap needs a 2D grid, got shape {g.shape}")
    if np.any(g < 0):
        raise ValueError("heatmap grid must be non-negative")
    peak = g.max() if g.size else 0.0
    t = np.log1p(g) / np.log1p(peak) if peak > 0 else np.zeros_like(g)
    return colormap(t)


def write_ppm(rgb, path):
    h, w, _ = rgb.shape
    with _open_for_write(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8)
    if data.size != w * h * 3:
        raise ValueError(f"{path}: payload {data.size} bytes, header implies {w * h * 3}")
    return data.reshape(h, w, 3)


def write_heatmap(grid, path):
    write_ppm(heatmap_rgb(grid), path)


def write_tensor(tensor, path):
    t = as_tensor(tensor)
    with _open_for_write(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write((" ".join(str(s) for s in t.shape) + "\n").encode("ascii"))
        fh.write(t.astype("<f4").tobytes())


def read_tensor(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(TENSOR_MAGIC):
        raise ValueError(f"{path}: bad magic")
    end = blob.index(b"\n", len(TENSOR_MAGIC))
    shape = tuple(int(s) for s in blob[len(TENSOR_MAGIC):end].split())
    payload = blob[end + 1:]
    if len(payload) != 4 * int(np.prod(shape)):
        raise ValueError(f"{path}: payload {len(payload)} bytes, shape {shape} implies {4 * int(np.prod(shape))}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)


def write_metrics_csv(summaries, path):
    with _open_for_write(path) as fh:
        fh.write("filter,peak,concentration,entropy\n")
        for s in summaries:
            fh.write(f"{s.filter_id},{s.peak:.6g},{s.concentration:.6f},{s.entropy:.6f}\n")


def write_pointcloud_csv(rows, path, filter_ids=None):
    with _open_for_write(path) as fh:
        if filter_ids is None:
            fh.write("e1,e2,e3,magnitude\n")
            for e1, e2, e3, m in rows:
                fh.write(f"{e1:.6f},{e2:.6f},{e3:.6f},{m:.6g}\n")
        else:
            fh.write("filter,e1,e2,e3,magnitude\n")
            for fid, (e1, e2, e3, m) in zip(filter_ids, rows):
                fh.write(f"{fid},{e1:.6f},{e2:.6f},{e3:.6f},{m:.6g}\n")


def write_metadata(path, meta):
    """``key=value`` lines, keys sorted, so identical runs give identical files."""
    with _open_for_write(path) as fh:
        for key in sorted(meta):
            fh.write(f"{key}={meta[key]}\n")


def metadata_path(out):
    out = Path(out)
    return out / "meta.txt" if out.is_dir() else out.with_name(out.name + ".meta")
