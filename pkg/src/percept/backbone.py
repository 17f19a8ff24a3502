"""Descriptor quantization and the frozen convolutional feature extractor.

Descriptors are scaled per channel to 0-255 with a training-set calibration,
resized to 68 x 68 x 3, and pushed through a frozen, seeded convolutional
stack (a stand-in for a pretrained deep extractor: four 3x3 stride-2 blocks
68 -> 34 -> 17 -> 9 -> 5, then a 2x2 valid conv to 4 x 4 x K, rectified,
He-style seeded init). Temporal mean pooling turns the 4 x 4 x K maps into
a length-4K vector, so every stream lands in the same feature space.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError

IMAGE_SIZE = 68
MAP_SIZE = 4
CALIB_EPS = 1e-6


@dataclass
class CalibrationRange:
    mins: np.ndarray    # (C,)
    maxs: np.ndarray    # (C,)

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=float)
        self.maxs = np.asarray(self.maxs, dtype=float)
        if np.any(self.maxs <= self.mins):
            raise DataError("calibration requires max > min per channel")

    @property
    def n_channels(self):
        return self.mins.shape[0]

    @property
    def calib_id(self):
        payload = self.mins.tobytes() + self.maxs.tobytes()
        return hashlib.sha1(payload).hexdigest()[:8]


def fit_calibration(tensors):
    """Per-channel (min, max) over a training set of descriptor tensors.

    Degenerate channels (max == min) are widened by CALIB_EPS on both sides.
    """
    if not tensors:
        raise DataError("fit_calibration needs at least one tensor")
    n_channels = tensors[0].data.shape[2]
    mins = np.full(n_channels, np.inf)
    maxs = np.full(n_channels, -np.inf)
    for t in tensors:
        if t.data.shape[2] != n_channels:
            raise DataError("inconsistent channel counts across tensors")
        mins = np.minimum(mins, t.data.min(axis=(0, 1)))
        maxs = np.maximum(maxs, t.data.max(axis=(0, 1)))
    degenerate = maxs <= mins
    mins[degenerate] -= CALIB_EPS
    maxs[degenerate] += CALIB_EPS
    return CalibrationRange(mins=mins, maxs=maxs)


@dataclass
class QuantizedClipImage:
    pixels: np.ndarray    # (68, 68, 3) uint8
    stream: str
    calib_id: str

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE, 3) or self.pixels.dtype != np.uint8:
            raise DataError(
                f"quantized image must be {IMAGE_SIZE}x{IMAGE_SIZE}x3 uint8, "
                f"got {self.pixels.shape} {self.pixels.dtype}")


def round_half_up(x):
    return np.floor(np.asarray(x) + 0.5)


def bilinear_resize(image, out_h, out_w):
    """Half-pixel bilinear resize over the trailing (H, W, C) axes.

    Lerp-formulated so constant inputs are preserved exactly; accepts an
    optional leading batch axis.
    """
    in_h, in_w = image.shape[-3], image.shape[-2]

    def grid(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    ylo, yhi, fy = grid(out_h, in_h)
    xlo, xhi, fx = grid(out_w, in_w)
    rows_lo = np.take(image, ylo, axis=-3)
    rows_hi = np.take(image, yhi, axis=-3)
    a, b = np.take(rows_lo, xlo, axis=-2), np.take(rows_lo, xhi, axis=-2)
    c, d = np.take(rows_hi, xlo, axis=-2), np.take(rows_hi, xhi, axis=-2)
    top = a + fx[:, None] * (b - a)
    bot = c + fx[:, None] * (d - c)
    return top + fy[:, None, None] * (bot - top)


def quantize_and_resize(tensor, calib):
    """Map a descriptor tensor to a 68 x 68 x 3 uint8 clip image.

    Per channel: clip to the calibration range, scale to 0-255 with
    round-half-up; 2-channel tensors gain an all-zero third channel before
    the bilinear resize. Both roundings are locked for bit-exact goldens.
    """
    if tensor.data.shape[2] != calib.n_channels:
        raise DataError("tensor channels do not match calibration")
    clipped = np.clip(tensor.data, calib.mins, calib.maxs)
    scaled = round_half_up(255.0 * (clipped - calib.mins) / (calib.maxs - calib.mins))
    if scaled.shape[2] == 2:
        scaled = np.concatenate([scaled, np.zeros_like(scaled[:, :, :1])], axis=2)
    resized = bilinear_resize(scaled, IMAGE_SIZE, IMAGE_SIZE)
    pixels = np.clip(round_half_up(resized), 0, 255).astype(np.uint8)
    return QuantizedClipImage(pixels=pixels, stream=tensor.stream,
                              calib_id=calib.calib_id)


def _conv_same_stride2(x, w, b):
    """3x3 stride-2 'same' convolution on (N, H, W, Cin) -> (N, ceil(H/2), ...)."""
    n, h, wd, cin = x.shape
    oh, ow = -(-h // 2), -(-wd // 2)
    ph, pw = (oh - 1) * 2 + 3 - h, (ow - 1) * 2 + 3 - wd
    x = np.pad(x, ((0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2), (0, 0)))
    win = sliding_window_view(x, (3, 3), axis=(1, 2))[:, ::2, ::2]   # (N,oh,ow,Cin,3,3)
    cols = win.reshape(n * oh * ow, cin * 9)
    wmat = w.transpose(2, 0, 1, 3).reshape(cin * 9, -1)              # (Cin*9, Cout)
    return (cols @ wmat).reshape(n, oh, ow, -1) + b


def _conv_valid_2x2(x, w, b):
    n, h, wd, cin = x.shape
    win = sliding_window_view(x, (2, 2), axis=(1, 2))                # (N,h-1,w-1,Cin,2,2)
    cols = win.reshape(n * (h - 1) * (wd - 1), cin * 4)
    wmat = w.transpose(2, 0, 1, 3).reshape(cin * 4, -1)
    return (cols @ wmat).reshape(n, h - 1, wd - 1, -1) + b


@dataclass
class BackboneModel:
    """Frozen seeded conv stack; identical seed gives identical parameters."""

    k: int = 64
    seed: int = 0
    channels: tuple = (8, 16, 32, 64)
    params: list = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        widths = [3, *self.channels, self.k]
        kernels = [3, 3, 3, 3, 2]
        self.params = []
        for kh, cin, cout in zip(kernels, widths[:-1], widths[1:]):
            fan_in = kh * kh * cin
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                           size=(kh, kh, cin, cout)).astype(np.float32)
            b = rng.normal(0.0, 0.01, size=cout).astype(np.float32)
            w.flags.writeable = False
            b.flags.writeable = False
            self.params.append((w, b))

    def forward_batch(self, pixels, chunk=256):
        """(N, 68, 68, 3) uint8 -> (N, 4, 4, K) float32 feature maps."""
        pixels = np.asarray(pixels)
        if pixels.ndim != 4 or pixels.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE, 3):
            raise DataError(f"expected (N, 68, 68, 3) input, got {pixels.shape}")
        outs = []
        for lo in range(0, pixels.shape[0], chunk):
            x = pixels[lo:lo + chunk].astype(np.float32) / np.float32(255.0)
            for i, (w, b) in enumerate(self.params):
                conv = _conv_valid_2x2 if i == len(self.params) - 1 else _conv_same_stride2
                x = np.maximum(conv(x, w, b), 0.0)
            outs.append(x)
        out = np.concatenate(outs) if outs else np.zeros((0, MAP_SIZE, MAP_SIZE, self.k),
                                                         dtype=np.float32)
        assert out.shape[1:] == (MAP_SIZE, MAP_SIZE, self.k)
        return out


@dataclass
class FeatureMaps:
    values: np.ndarray    # (4, 4, K) float32
    stream: str

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[:2] != (MAP_SIZE, MAP_SIZE):
            raise DataError(f"feature maps must be 4x4xK, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise DataError("feature maps contain non-finite values")


def backbone_forward(image, model):
    """Deterministic forward pass of one quantized clip image."""
    out = model.forward_batch(image.pixels[None])[0]
    return FeatureMaps(values=out, stream=image.stream)


def temporal_mean_pool(maps):
    """Mean over the vertical (temporal) axis of each 4x4 map, concatenated
    map-by-map into a length-4K vector."""
    values = maps.values if isinstance(maps, FeatureMaps) else np.asarray(maps)
    pooled = values.mean(axis=0)          # (4, K) column means per map
    return pooled.T.reshape(-1)
