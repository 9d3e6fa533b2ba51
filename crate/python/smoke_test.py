"""Smoke test for the compiled extension.

Build it first with `cargo build -p hamsim-py --release`. The shared library
is copied next to a temporary import path under the module's name.
"""

import importlib
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
CANDIDATES = ["libhamsim_py.so", "libhamsim_py.dylib", "hamsim_py.dll"]


def load():
    for profile in ("release", "debug"):
        for name in CANDIDATES:
            lib = ROOT / "target" / profile / name
            if lib.exists():
                tmp = Path(tempfile.mkdtemp())
                suffix = ".pyd" if name.endswith(".dll") else ".so"
                shutil.copy(lib, tmp / ("hamsim_py" + suffix))
                sys.path.insert(0, str(tmp))
                return importlib.import_module("hamsim_py")
    sys.exit("extension not built; run `cargo build -p hamsim-py --release`")


def main():
    hs = load()
    print("hamsim_py", hs.__version__)

    defaults = hs.default_config()
    assert hs.validate_config(defaults) == []
    bad = hs.validate_config("[experiment]\nkind = optimize-sliced\n[slicing]\nslices = -5\n")
    assert any("slices" in d for d in bad), bad

    eps = [hs.trotter_error(5, "2", 1, t) for t in (0.05, 0.1)]
    assert 0 < eps[0] < eps[1] < 1, eps

    assert abs(hs.noise_floor(1e-3, 1) - 1e-3) < 1e-15

    cfg = "[experiment]\nkind = trotter-scan\nname = smoke\n[hamiltonian]\nn = 4\n[time]\nstart = 0.02\nstop = 0.2\ncount = 8\nspacing = log\n"
    with tempfile.TemporaryDirectory() as out:
        files = hs.run_config(cfg, out)
        csv = Path(files[0]).read_text()
        assert csv.startswith("# hamsim "), csv[:40]
        assert "t,tJ,metric_name,value,n,L,S,scheme,optimizer" in csv
    print("ok")


if __name__ == "__main__":
    main()
