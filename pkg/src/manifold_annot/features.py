"""Classical visual descriptors extracted from raw RGB images.

Three fixed-length vectors per image: a 73-bin edge direction histogram
(72 five-degree orientation bins plus a non-edge bin), a 144-entry HSV
auto-correlogram (36 color bins x 4 chessboard distances), and 225
block-wise LAB color moments (5x5 grid x 3 channels x mean/stddev/skew).

Images come in as binary PPM (P6); features go out as whitespace-separated
"<image-id> <v1> ... <vk>" text lines.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

FEATURE_LENGTHS = {"edh73": 73, "corr144": 144, "cm225": 225}

CORRELOGRAM_DISTANCES = (1, 3, 5, 7)
# HSV quantization: 6 hue sectors x 3 saturation bands x 2 value bands = 36.
HSV_BINS = (6, 3, 2)

CANNY_SMOOTH_SIGMA = 1.4
CANNY_LOW_PERCENTILE = 70.0
CANNY_HIGH_PERCENTILE = 90.0

MOMENT_GRID = 5

_REAL_FMT = ".17g"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB image; ``pixels`` has shape (height, width, 3)."""

    width: int
    height: int
    pixels: np.ndarray

    @classmethod
    def from_array(cls, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"pixels must have shape (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must contain at least one pixel")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr.astype(np.uint8))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """One extracted descriptor; length is fixed by its kind."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_LENGTHS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.values.shape != (FEATURE_LENGTHS[self.kind],):
            raise ValueError(
                f"{self.kind} vector must have length {FEATURE_LENGTHS[self.kind]}, "
                f"got shape {self.values.shape}"
            )


def _pixels(img):
    if isinstance(img, RgbImage):
        return img.pixels
    return RgbImage.from_array(img).pixels


# ---------------------------------------------------------------------------
# Color space conversions


def rgb_to_hsv(rgb):
    """Hexcone HSV from 8-bit RGB: h in [0, 360), s and v in [0, 1].

    Accepts a single (r, g, b) triple or any (..., 3) array; returns an
    array of the same leading shape with h, s, v along the last axis.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValueError(f"expected 3 channels, got shape {arr.shape}")
    scaled = arr / 255.0
    r, g, b = scaled[..., 0], scaled[..., 1], scaled[..., 2]
    v = scaled.max(axis=-1)
    delta = v - scaled.min(axis=-1)
    s = np.divide(delta, v, out=np.zeros_like(v), where=v > 0)
    h = np.zeros_like(v)
    mask = delta > 0
    rmax = mask & (v == r)
    gmax = mask & (v == g) & ~rmax
    bmax = mask & ~rmax & ~gmax
    denom = np.where(mask, delta, 1.0)
    h = np.where(rmax, (g - b) / denom, h)
    h = np.where(gmax, 2.0 + (b - r) / denom, h)
    h = np.where(bmax, 4.0 + (r - g) / denom, h)
    h = (h * 60.0) % 360.0
    return np.stack([h, s, v], axis=-1)


# sRGB -> XYZ (D65) matrix and white point.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(rgb):
    """CIE LAB from 8-bit sRGB via linearization, XYZ (D65), and LAB.

    Accepts a triple or any (..., 3) array; white maps to L = 100 with
    a and b at 0, grays stay on the neutral axis.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValueError(f"expected 3 channels, got shape {arr.shape}")
    c = arr / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T
    ratio = xyz / _D65_WHITE
    eps = (6.0 / 29.0) ** 3
    f = np.where(ratio > eps, np.cbrt(ratio), ratio / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


# ---------------------------------------------------------------------------
# Edge direction histogram


def _grayscale(pixels):
    return (
        0.299 * pixels[..., 0].astype(np.float64)
        + 0.587 * pixels[..., 1]
        + 0.114 * pixels[..., 2]
    )


def _nonmax_suppress(mag, gx, gy):
    # Quantize the gradient direction into 4 sectors and keep pixels whose
    # magnitude is at least that of both neighbours along the gradient.
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = mag
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    offsets = np.empty((h, w, 2), dtype=np.int64)
    horizontal = (angle < 22.5) | (angle >= 157.5)
    diag_down = (angle >= 22.5) & (angle < 67.5)
    vertical = (angle >= 67.5) & (angle < 112.5)
    diag_up = (angle >= 112.5) & (angle < 157.5)
    offsets[horizontal] = (0, 1)
    offsets[diag_down] = (1, 1)
    offsets[vertical] = (1, 0)
    offsets[diag_up] = (1, -1)
    rows, cols = np.mgrid[0:h, 0:w]
    ahead = padded[1 + rows + offsets[..., 0], 1 + cols + offsets[..., 1]]
    behind = padded[1 + rows - offsets[..., 0], 1 + cols - offsets[..., 1]]
    return (mag >= ahead) & (mag >= behind)


def edge_map(img):
    """Canny edge mask plus the Sobel gradients it was derived from.

    Gaussian smoothing (sigma 1.4, reflect borders), Sobel gradients,
    non-maximum suppression, then hysteresis with thresholds at the 70th
    and 90th percentiles of the gradient magnitude over all pixels. A
    gradient-free (constant) image yields an empty mask.
    """
    pixels = _pixels(img)
    if pixels.shape[0] < 3 or pixels.shape[1] < 3:
        raise ValueError(
            f"image must be at least 3x3 for gradients, got "
            f"{pixels.shape[1]}x{pixels.shape[0]}"
        )
    smooth = ndimage.gaussian_filter(_grayscale(pixels), CANNY_SMOOTH_SIGMA, mode="reflect")
    gx = ndimage.sobel(smooth, axis=1, mode="reflect")
    gy = ndimage.sobel(smooth, axis=0, mode="reflect")
    mag = np.hypot(gx, gy)
    low, high = np.percentile(mag, [CANNY_LOW_PERCENTILE, CANNY_HIGH_PERCENTILE])
    ridge = _nonmax_suppress(mag, gx, gy) & (mag > 0)
    weak = ridge & (mag >= low)
    strong = ridge & (mag >= high)
    if not strong.any():
        return np.zeros_like(weak), gx, gy
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    edges = np.isin(labels, keep) & weak
    return edges, gx, gy


def gradient_direction_bins(gx, gy, mask):
    """5-degree orientation bins (0..71) of the gradient at masked pixels."""
    angles = np.degrees(np.arctan2(gy[mask], gx[mask])) % 360.0
    return np.minimum((angles / 5.0).astype(np.int64), 71)


def edge_direction_histogram(img):
    """73-bin edge direction histogram.

    Bins 0..71 count edge pixels by gradient direction quantized at 5
    degrees, normalized by the edge count; bin 72 is the non-edge pixel
    count normalized by the total pixel count. An edge-free image puts all
    of its mass in bin 72.
    """
    pixels = _pixels(img)
    edges, gx, gy = edge_map(pixels)
    total = pixels.shape[0] * pixels.shape[1]
    edge_count = int(edges.sum())
    values = np.zeros(73)
    if edge_count > 0:
        bins = gradient_direction_bins(gx, gy, edges)
        values[:72] = np.bincount(bins, minlength=72) / edge_count
    values[72] = (total - edge_count) / total
    return FeatureVector(kind="edh73", values=values)


# ---------------------------------------------------------------------------
# HSV auto-correlogram


def quantize_hsv(img):
    """Map each pixel to one of 36 HSV bins (6 hue x 3 saturation x 2 value)."""
    hsv = rgb_to_hsv(_pixels(img))
    nh, ns, nv = HSV_BINS
    h_bin = np.minimum((hsv[..., 0] / 360.0 * nh).astype(np.int64), nh - 1)
    s_bin = np.minimum((hsv[..., 1] * ns).astype(np.int64), ns - 1)
    v_bin = np.minimum((hsv[..., 2] * nv).astype(np.int64), nv - 1)
    return (h_bin * ns + s_bin) * nv + v_bin


def _ring_offsets(d):
    # All (dy, dx) at chessboard distance exactly d: the square ring.
    offsets = []
    for dy in range(-d, d + 1):
        for dx in range(-d, d + 1):
            if max(abs(dy), abs(dx)) == d:
                offsets.append((dy, dx))
    return offsets


def color_autocorrelogram(img):
    """144-entry HSV auto-correlogram.

    For each of 36 HSV color bins and each chessboard distance d in
    {1, 3, 5, 7}: the probability that a pixel at distance d from a pixel
    of that color has the same color. Pairs reaching outside the image are
    excluded from numerator and denominator alike; empty bins score 0.
    Output is bin-major: entry 4 * c + k for color c and the k-th distance.
    """
    pixels = _pixels(img)
    h, w = pixels.shape[0], pixels.shape[1]
    need = 2 * max(CORRELOGRAM_DISTANCES) + 1
    if h < need or w < need:
        raise ValueError(
            f"image must be at least {need}x{need} for distance "
            f"{max(CORRELOGRAM_DISTANCES)}, got {w}x{h}"
        )
    quant = quantize_hsv(pixels)
    n_colors = int(np.prod(HSV_BINS))
    values = np.zeros(len(CORRELOGRAM_DISTANCES) * n_colors)
    for k, d in enumerate(CORRELOGRAM_DISTANCES):
        same = np.zeros(n_colors, dtype=np.int64)
        total = np.zeros(n_colors, dtype=np.int64)
        for dy, dx in _ring_offsets(d):
            src = quant[
                max(0, -dy) : h - max(0, dy),
                max(0, -dx) : w - max(0, dx),
            ]
            dst = quant[
                max(0, dy) : h - max(0, -dy),
                max(0, dx) : w - max(0, -dx),
            ]
            total += np.bincount(src.ravel(), minlength=n_colors)
            match = src == dst
            same += np.bincount(src[match].ravel(), minlength=n_colors)
        ratio = np.divide(
            same, total, out=np.zeros(n_colors, dtype=np.float64), where=total > 0
        )
        values[k :: len(CORRELOGRAM_DISTANCES)] = ratio
    return FeatureVector(kind="corr144", values=values)


# ---------------------------------------------------------------------------
# Block-wise LAB color moments


def _grid_edges(size):
    # Block boundaries at round(i * size / MOMENT_GRID); covers every pixel
    # exactly once and is strictly increasing for size >= MOMENT_GRID.
    return [int(np.floor(i * size / MOMENT_GRID + 0.5)) for i in range(MOMENT_GRID + 1)]


def color_moments(img):
    """225 block-wise LAB color moments.

    The image is split into a 5x5 grid; each block contributes, per LAB
    channel, its mean, its population standard deviation, and the signed
    cube root of its third central moment. Output is block-major (grid rows
    then columns), then channel (L, a, b), then moment.
    """
    pixels = _pixels(img)
    h, w = pixels.shape[0], pixels.shape[1]
    if h < MOMENT_GRID or w < MOMENT_GRID:
        raise ValueError(
            f"image must be at least {MOMENT_GRID}x{MOMENT_GRID}, got {w}x{h}"
        )
    lab = rgb_to_lab(pixels)
    row_edges = _grid_edges(h)
    col_edges = _grid_edges(w)
    values = np.zeros(MOMENT_GRID * MOMENT_GRID * 9)
    pos = 0
    for by in range(MOMENT_GRID):
        for bx in range(MOMENT_GRID):
            block = lab[row_edges[by] : row_edges[by + 1], col_edges[bx] : col_edges[bx + 1]]
            flat = block.reshape(-1, 3)
            mean = flat.mean(axis=0)
            centered = flat - mean
            var = (centered**2).mean(axis=0)
            third = (centered**3).mean(axis=0)
            for ch in range(3):
                values[pos] = mean[ch]
                values[pos + 1] = np.sqrt(var[ch])
                values[pos + 2] = np.cbrt(third[ch])
                pos += 3
    return FeatureVector(kind="cm225", values=values)


EXTRACTORS = {
    "edh73": edge_direction_histogram,
    "corr144": color_autocorrelogram,
    "cm225": color_moments,
}


def extract(img, kind):
    """Run the named extractor ('edh73', 'corr144', or 'cm225')."""
    if kind not in EXTRACTORS:
        raise ValueError(f"unknown feature kind {kind!r}; expected one of {sorted(EXTRACTORS)}")
    return EXTRACTORS[kind](img)


# ---------------------------------------------------------------------------
# Binary PPM (P6) ingestion


def _read_ppm_tokens(blob, count):
    # PPM headers are whitespace-separated tokens with '#' comments.
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(blob):
            raise ValueError("truncated PPM header")
        byte = blob[pos : pos + 1]
        if byte == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif byte.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(blob) and not blob[pos : pos + 1].isspace():
                pos += 1
            tokens.append(blob[start:pos])
    return tokens, pos + 1  # consume the single whitespace after the last token


def read_ppm(path):
    """Load a binary PPM (P6, maxval 255) file as an RgbImage."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens, offset = _read_ppm_tokens(blob, 4)
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    expected = width * height * 3
    data = blob[offset : offset + expected]
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} pixel bytes, found {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(width=width, height=height, pixels=pixels)


def write_ppm(img, path):
    """Write an RgbImage (or (h, w, 3) array) as binary PPM."""
    pixels = _pixels(img)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Feature line format: "<image-id> <v1> ... <vk>"


def format_feature_line(image_id, values):
    """One whitespace-separated feature line; ids must not contain spaces."""
    if not image_id or any(ch.isspace() for ch in image_id):
        raise ValueError(f"image id must be non-empty and whitespace-free: {image_id!r}")
    return " ".join([image_id] + [format(float(v), _REAL_FMT) for v in values])


def parse_feature_line(line):
    parts = line.split()
    if len(parts) < 2:
        raise ValueError("need an id and at least one value")
    try:
        values = np.array([float(p) for p in parts[1:]])
    except ValueError as exc:
        raise ValueError(f"bad numeric value: {exc}") from None
    return parts[0], values


def read_feature_file(path):
    """Parse a feature file into (ids, matrix).

    Blank lines and '#' comment lines are skipped; malformed lines raise
    with their line number; every row must have the same width.
    """
    ids, rows = [], []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                image_id, values = parse_feature_line(stripped)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = values.size
            elif values.size != width:
                raise ValueError(
                    f"{path}:{lineno}: expected {width} values, got {values.size}"
                )
            ids.append(image_id)
            rows.append(values)
    if not ids:
        raise ValueError(f"{path}: no feature lines found")
    return ids, np.vstack(rows)
