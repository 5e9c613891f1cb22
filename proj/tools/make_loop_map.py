#!/usr/bin/env python3
"""Writes the rectangular loop map: outer walls plus a hollow inner block."""
import argparse


def build(width, height, wall, inner):
    x0, y0, x1, y1 = inner
    rows = []
    for y in range(height):
        row = []
        for x in range(width):
            outer = x < wall or x >= width - wall or y < wall or y >= height - wall
            in_box = x0 <= x < x1 and y0 <= y < y1
            in_hole = x0 + wall <= x < x1 - wall and y0 + wall <= y < y1 - wall
            row.append("#" if outer or (in_box and not in_hole) else ".")
        rows.append("".join(row))
    rows.reverse()  # first text row is the top of the map
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--width", type=int, default=350)
    ap.add_argument("--height", type=int, default=300)
    ap.add_argument("--wall", type=int, default=2)
    ap.add_argument("--inner", type=int, nargs=4, default=[100, 90, 250, 210],
                    metavar=("X0", "Y0", "X1", "Y1"))
    ap.add_argument("--resolution", type=float, default=1.0)
    ap.add_argument("out")
    a = ap.parse_args()
    rows = build(a.width, a.height, a.wall, a.inner)
    with open(a.out, "w", newline="\n") as f:
        f.write(f"{a.width} {a.height} {a.resolution:g}\n")
        f.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
