"""Gnuplot scripts for a run directory (they read ``log.csv`` next to them)."""

from __future__ import annotations

from pathlib import Path

# name -> (title, y label, [(column, legend), ...])
LAYOUTS = {
    "position_error": ("Position error", "error [m]", [("ex", "x"), ("ey", "y"), ("ez", "z")]),
    "orientation_error": (
        "Orientation error",
        "error [rad]",
        [("e_roll", "roll"), ("e_pitch", "pitch"), ("e_yaw", "yaw")],
    ),
    "ground_error": ("Ground attitude error", "error [rad]", [("e_tilt", "tilt"), ("e_rolling", "rolling")]),
    "joint_angles": ("Joint angles", "angle [rad]", [("q1", "q1"), ("q2", "q2")]),
    "thrust": (
        "Commanded thrust",
        "thrust [N]",
        [("thrust1", "rotor 1"), ("thrust2", "rotor 2"), ("thrust3", "rotor 3")],
    ),
    "vectoring": ("Vectoring angles", "angle [rad]", [("phi1", "rotor 1"), ("phi2", "rotor 2"), ("phi3", "rotor 3")]),
}


def gnuplot_script(name: str, log_name: str = "log.csv") -> str:
    title, ylabel, series = LAYOUTS[name]
    plots = ", \\\n     ".join(
        f"'{log_name}' using \"t\":\"{col}\" with lines title \"{legend}\"" for col, legend in series
    )
    return (
        "set terminal pngcairo size 900,500\n"
        f"set output '{name}.png'\n"
        "set datafile separator ','\n"
        f"set title \"{title}\"\n"
        "set xlabel \"time [s]\"\n"
        f"set ylabel \"{ylabel}\"\n"
        "set grid\n"
        f"plot {plots}\n"
    )


def write_plot_scripts(out_dir, log_name: str = "log.csv") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in LAYOUTS:
        path = out / f"{name}.gp"
        path.write_text(gnuplot_script(name, log_name))
        paths.append(path)
    return paths
