"""SVG rendering of datamation key-frames (the CLI's frame exporter)."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .doc import DatamationDoc, KeyFrame


def render_keyframe_svg(doc: DatamationDoc, frame_index: int) -> str:
    """One standalone SVG per key-frame: bands, units, annotations, caption."""
    frame: KeyFrame = doc.keyframes[frame_index]
    width, height = doc.canvas
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="#ffffff"/>',
    ]

    if frame.x_axis:
        for band in frame.x_axis.bands:
            parts.append(
                f'<line x1="{band.start:.2f}" y1="{height - 18:.2f}" '
                f'x2="{band.end:.2f}" y2="{height - 18:.2f}" stroke="#999" stroke-width="1"/>'
            )
            mid = (band.start + band.end) / 2
            parts.append(
                f'<text x="{mid:.2f}" y="{height - 5:.2f}" font-size="11" '
                f'text-anchor="middle" fill="#444">{escape(band.label)}</text>'
            )
    if frame.y_axis:
        for band in frame.y_axis.bands:
            mid = (band.start + band.end) / 2
            parts.append(
                f'<text x="6" y="{mid:.2f}" font-size="11" fill="#444">'
                f"{escape(band.label)}</text>"
            )

    for unit in frame.units:
        color = doc.palette[unit.color]
        parts.append(
            f'<circle cx="{unit.x:.2f}" cy="{unit.y:.2f}" r="{unit.radius:.2f}" '
            f'fill="{color}" fill-opacity="{unit.opacity:g}" data-unit-id="{unit.id}"/>'
        )

    y_text = 36.0
    for note in frame.annotations:
        label = note.text if note.group_key is None else f"{note.group_key}: {note.text}"
        parts.append(
            f'<text x="{width - 12:.2f}" y="{y_text:.2f}" font-size="14" '
            f'text-anchor="end" fill="#111" font-weight="bold">{escape(label)}</text>'
        )
        y_text += 18.0

    if frame.caption:
        parts.append(
            f'<text x="{width / 2:.2f}" y="20" font-size="13" text-anchor="middle" '
            f'fill="#222">{escape(frame.caption)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
