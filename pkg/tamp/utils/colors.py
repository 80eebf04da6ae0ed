ACTION_COLORS = {
    "approach": "#1F77B4",
    "grasp": "#9467BD",
    "align": "#FF7F0E",
    "place": "#2CA02C",
    "release": "#D62728",
}
FALLBACK_COLOR = "#7F7F7F"


def hex_to_rgb(hex_color: str) -> tuple[int, int, int]:
    """Convert hex color (e.g., '#FF00AA') to RGB tuple."""
    hex_color = hex_color.lstrip("#")
    return tuple(int(hex_color[i : i + 2], 16) for i in (0, 2, 4))


def rgb_to_hex(rgb: tuple[int, int, int]) -> str:
    return "#{:02X}{:02X}{:02X}".format(*rgb)


def interpolate_color(start_hex: str, end_hex: str, factor: float) -> str:
    """Linear blend of two hex colors, factor clamped to [0, 1]."""
    start_rgb = hex_to_rgb(start_hex)
    end_rgb = hex_to_rgb(end_hex)
    factor = max(0.0, min(1.0, factor))
    return rgb_to_hex(tuple(round(s + (e - s) * factor) for s, e in zip(start_rgb, end_rgb)))


def gradient(start_color: str, end_color: str, steps: int, reverse: bool = False) -> list[str]:
    """
    Evenly spaced colors from start_color to end_color, both included.

    Used to fade sample fans from early (light) to late (saturated) iterations.
    """
    if steps < 1:
        raise ValueError("Steps must be at least 1.")
    if steps == 1:
        return [end_color]
    colors = [interpolate_color(start_color, end_color, i / (steps - 1)) for i in range(steps)]
    if reverse:
        colors.reverse()
    return colors


def action_color(skill: str) -> str:
    return ACTION_COLORS.get(skill, FALLBACK_COLOR)
