#!/usr/bin/env python3
"""Writes the canonical shape templates as text (one row of 0/1 per line).

Shapes are described in normalized coordinates: x grows to the right, y grows
downward, and pixel (i, j) has center x = (2j + 1)/S - 1, y = (2i + 1)/S - 1.
"""
import sys


def bar(x, y):
    return abs(y) <= 0.13 and abs(x) <= 0.65


def ell(x, y):
    stem = -0.5 <= x <= -0.25 and -0.6 <= y <= 0.6
    foot = 0.35 <= y <= 0.6 and -0.5 <= x <= 0.5
    return stem or foot


def tee(x, y):
    top = -0.6 <= y <= -0.35 and -0.6 <= x <= 0.6
    post = -0.125 <= x <= 0.125 and -0.35 <= y <= 0.6
    return top or post


def wedge(x, y):
    # Half-width grows linearly from 0 at y = -0.6 to 0.5 at y = 0.6.
    return -0.6 <= y <= 0.6 and abs(x) <= 0.5 * (y + 0.6) / 1.2


def render(shape, size):
    rows = []
    for i in range(size):
        y = (2 * i + 1) / size - 1
        rows.append("".join("1" if shape((2 * j + 1) / size - 1, y) else "0" for j in range(size)))
    return rows


def main():
    size = int(sys.argv[1]) if len(sys.argv) > 1 else 32
    out = sys.stdout
    for name, shape in (("bar", bar), ("L", ell), ("T", tee), ("wedge", wedge)):
        out.write(f"# {name} {size}\n")
        out.write("\n".join(render(shape, size)) + "\n")


if __name__ == "__main__":
    main()
