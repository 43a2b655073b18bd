import numpy as np
import pytest

from shotladder.media import VideoClip

ACCEPTANCE_LINES: list[str] = []


def make_clip(width=64, height=64, frames=3, bit_depth=8, seed=0, motion=2):
    """Textured clip with horizontal motion and mild chroma variation."""
    rng = np.random.default_rng(seed)
    hi = 2 ** bit_depth - 1
    base = rng.uniform(0, hi, size=(height, width + frames * motion))
    ys, us, vs = [], [], []
    for k in range(frames):
        ys.append(np.rint(base[:, k * motion:k * motion + width]))
        us.append(np.rint(rng.uniform(0.3 * hi, 0.7 * hi, size=((height + 1) // 2, (width + 1) // 2))))
        vs.append(np.rint(rng.uniform(0.3 * hi, 0.7 * hi, size=((height + 1) // 2, (width + 1) // 2))))
    return VideoClip.from_arrays(np.stack(ys), np.stack(us), np.stack(vs), bit_depth=bit_depth)


@pytest.fixture
def clip():
    return make_clip()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
