"""Image decoding, Gaussian smoothing, and Sobel gradient fields.

Images are numpy arrays: RGB images are (h, w, 3) uint8, grayscale
images are (h, w) uint8, both row-major. All operations are pure
functions; nothing here mutates its inputs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, InvalidParam, IoError

# Edge orientation flags. A pixel is a VERTICAL_EDGE when |gx| >= |gy|
# (the intensity changes horizontally, so the edge runs vertically);
# ties go to VERTICAL_EDGE for determinism.
HORIZONTAL_EDGE = 0
VERTICAL_EDGE = 1

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class GradientField:
    """Per-pixel Sobel responses for one grayscale image.

    gx, gy are signed 16-bit Sobel responses, mag is the L1 norm
    |gx| + |gy| (already thresholded: low-gradient pixels carry 0),
    and orient holds HORIZONTAL_EDGE / VERTICAL_EDGE flags. The
    outermost pixel ring always has mag 0, so chain walkers never
    read out of bounds.
    """

    gx: np.ndarray
    gy: np.ndarray
    mag: np.ndarray
    orient: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mag.shape


def decode_image(path: str | Path) -> np.ndarray:
    """Decode a PNG or binary PPM (P6, maxval 255) file to an RGB array.

    Alpha channels are dropped; 16-bit PNGs are rejected. Raises IoError
    for missing/unreadable files and FormatError for anything that is
    not an 8-bit PNG or P6 PPM.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read image file: {path}") from exc

    if raw.startswith(_PNG_SIGNATURE):
        return _decode_png(raw, path)
    if raw.startswith(b"P6"):
        return _decode_ppm(raw, path)
    raise FormatError(f"unsupported image encoding (not PNG or P6 PPM): {path}")


def _decode_png(raw: bytes, path: Path) -> np.ndarray:
    # IHDR is always the first chunk: bit depth lives at byte 24.
    if len(raw) < 26:
        raise FormatError(f"truncated PNG: {path}")
    bit_depth = raw[24]
    if bit_depth == 16:
        raise FormatError(f"16-bit PNGs are not supported: {path}")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            img.load()
            rgb = img.convert("RGB")
            return np.asarray(rgb, dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"malformed PNG: {path}") from exc


def _decode_ppm(raw: bytes, path: Path) -> np.ndarray:
    # Header: "P6" <w> <h> <maxval> followed by exactly one whitespace
    # byte, then w*h*3 raw bytes. '#' comments may appear between fields.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise FormatError(f"truncated PPM header: {path}")
        token = raw[start:pos]
        if not token.isdigit():
            raise FormatError(f"malformed PPM header field {token!r}: {path}")
        fields.append(int(token))
    pos += 1  # the single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"PPM maxval {maxval} unsupported (need 255): {path}")
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid PPM dimensions {width}x{height}: {path}")
    need = width * height * 3
    data = raw[pos : pos + need]
    if len(data) < need:
        raise FormatError(f"truncated PPM pixel data: {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(img: np.ndarray, path: str | Path) -> None:
    """Write an RGB array as a binary P6 PPM (maxval 255)."""
    h, w = img.shape[:2]
    header = b"P6\n" + f"{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def to_gray(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image to luminance: round(0.299 R + 0.587 G + 0.114 B)."""
    gray = img[..., 0].astype(np.float64)
    gray *= 0.299
    gray += 0.587 * img[..., 1]
    gray += 0.114 * img[..., 2]
    return np.clip(np.floor(gray + 0.5), 0, 255).astype(np.uint8)


def gaussian_kernel(kernel_size: int, sigma: float) -> np.ndarray:
    """1-D Gaussian weights, normalized to sum 1."""
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise InvalidParam(f"kernel_size must be odd and >= 3, got {kernel_size}")
    if sigma <= 0:
        raise InvalidParam(f"sigma must be positive, got {sigma}")
    r = kernel_size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(img: np.ndarray, kernel_size: int = 5, sigma: float = 1.0) -> np.ndarray:
    """Separable Gaussian smoothing with border replication.

    The kernel is normalized before application, so constant images pass
    through unchanged. Output has the same dimensions and dtype (uint8,
    rounded once after both passes).
    """
    k = gaussian_kernel(kernel_size, sigma)
    r = kernel_size // 2
    padded = np.pad(img.astype(np.float64), r, mode="edge")
    h, w = img.shape
    # Horizontal pass over rows, then vertical; accumulate shifted slices
    # through one scratch buffer to avoid a fresh temporary per tap.
    tmp = np.zeros((h + 2 * r, w), dtype=np.float64)
    buf = np.empty((h + 2 * r, w), dtype=np.float64)
    for i in range(kernel_size):
        np.multiply(padded[:, i : i + w], k[i], out=buf)
        tmp += buf
    out = np.zeros((h, w), dtype=np.float64)
    vbuf = np.empty((h, w), dtype=np.float64)
    for i in range(kernel_size):
        np.multiply(tmp[i : i + h, :], k[i], out=vbuf)
        out += vbuf
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def sobel_gradients(img: np.ndarray, gradient_threshold: int = 30) -> GradientField:
    """Sobel gradients, L1 magnitudes, and edge-orientation flags.

    gx uses the kernel [[-1,0,1],[-2,0,2],[-1,0,1]] and gy its transpose.
    Pixels whose L1 magnitude falls below gradient_threshold get mag 0,
    as does the outermost pixel ring.
    """
    h, w = img.shape
    if h < 3 or w < 3:
        raise InvalidParam(f"image must be at least 3x3 for Sobel, got {w}x{h}")
    a = img.astype(np.int32)
    top, mid, bot = a[:-2, :], a[1:-1, :], a[2:, :]
    col = top + 2 * mid + bot  # (h-2, w) smoothed columns
    gx_i = col[:, 2:] - col[:, :-2]
    left, cent, right = a[:, :-2], a[:, 1:-1], a[:, 2:]
    row = left + 2 * cent + right  # (h, w-2) smoothed rows
    gy_i = row[2:, :] - row[:-2, :]

    gx = np.zeros((h, w), dtype=np.int16)
    gy = np.zeros((h, w), dtype=np.int16)
    gx[1:-1, 1:-1] = gx_i
    gy[1:-1, 1:-1] = gy_i

    ax = np.abs(gx.astype(np.int32))
    ay = np.abs(gy.astype(np.int32))
    mag = (ax + ay).astype(np.uint16)
    mag[mag < gradient_threshold] = 0
    orient = np.where(ax >= ay, VERTICAL_EDGE, HORIZONTAL_EDGE).astype(np.uint8)
    return GradientField(gx=gx, gy=gy, mag=mag, orient=orient)
