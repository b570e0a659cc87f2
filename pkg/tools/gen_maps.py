"""Regenerate the bundled maps and scenario files in src/rrdt/maps/."""

from pathlib import Path

from rrdt.maps import regenerate

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "rrdt" / "maps"
    for path in regenerate(out):
        print("wrote", path)
