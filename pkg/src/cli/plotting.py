"""
Schedule Plotting
=================

Renders a timed schedule as a PNG: one lane per frame, plays drawn as their
real/imaginary envelopes, delays as shaded spans, frame ops as ticks.
"""

from pathlib import Path
from typing import Dict, Tuple, Union

from PIL import Image, ImageDraw

from ..core.pulse import Barrier, Capture, Delay, Measure, Play, Schedule, waveform_array
from ..utils.log import logger

LANE_HEIGHT = 60
LABEL_WIDTH = 120
MARGIN = 10
MAX_PLOT_WIDTH = 1600

BACKGROUND = (255, 255, 255)
AXIS = (200, 200, 200)
TEXT = (30, 30, 30)
REAL = (31, 119, 180)
IMAG = (255, 127, 14)
DELAY = (235, 235, 235)
TICK = (148, 103, 189)
CAPTURE = (44, 160, 44)
MEASURE = (214, 39, 40)


def render_schedule(schedule: Schedule, path: Union[str, Path]) -> Path:
    """Write the timeline image for a timed schedule and return its path."""
    if not schedule.is_timed:
        raise ValueError("Only timed schedules can be plotted")

    lanes = schedule.frames_used() or list(schedule.frames)
    rows: Dict[str, int] = {fid: i for i, fid in enumerate(lanes)}
    total = max(schedule.duration(), 1)
    scale = max(1.0, min(8.0, (MAX_PLOT_WIDTH - LABEL_WIDTH) / total))

    width = int(LABEL_WIDTH + total * scale + 2 * MARGIN)
    height = int(max(len(lanes), 1) * LANE_HEIGHT + 2 * MARGIN)
    image = Image.new('RGB', (width, height), BACKGROUND)
    draw = ImageDraw.Draw(image)

    def x_of(sample: float) -> float:
        return LABEL_WIDTH + MARGIN + sample * scale

    def lane(fid: str) -> Tuple[float, float, float]:
        top = MARGIN + rows[fid] * LANE_HEIGHT
        return top, top + LANE_HEIGHT / 2.0, top + LANE_HEIGHT - 4

    for fid, row in rows.items():
        top, mid, _ = lane(fid)
        draw.text((MARGIN, mid - 6), fid, fill=TEXT)
        draw.line([(x_of(0), mid), (x_of(total), mid)], fill=AXIS)

    for start, instr in zip(schedule.timing, schedule.instructions):
        if isinstance(instr, Measure):
            draw.line([(x_of(start), MARGIN), (x_of(start), height - MARGIN)], fill=MEASURE)
            draw.text((x_of(start) + 2, MARGIN), f"M{instr.site}", fill=MEASURE)
            continue
        if isinstance(instr, Barrier):
            tops = [lane(f)[0] for f in instr.frames if f in rows]
            if tops:
                draw.line([(x_of(start), min(tops)), (x_of(start), max(tops) + LANE_HEIGHT)], fill=AXIS, width=2)
            continue

        fid = instr.frame
        if fid not in rows:
            continue
        top, mid, bottom = lane(fid)
        half = (bottom - top) / 2.0

        if isinstance(instr, Play):
            samples = waveform_array(instr.waveform)
            for values, color in ((samples.real, REAL), (samples.imag, IMAG)):
                points = [(x_of(start + k + 0.5), mid - float(v) * half) for k, v in enumerate(values)]
                if len(points) == 1:
                    points.append(points[0])
                draw.line(points, fill=color)
        elif isinstance(instr, Delay):
            if instr.duration:
                draw.rectangle([x_of(start), top + 4, x_of(start + instr.duration), bottom], fill=DELAY)
        elif isinstance(instr, Capture):
            draw.rectangle([x_of(start) - 2, top + 4, x_of(start) + 2, bottom], fill=CAPTURE)
        else:
            draw.line([(x_of(start), top + 4), (x_of(start), bottom)], fill=TICK, width=2)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format='PNG')
    logger.info("Schedule plotted", path=str(path), lanes=len(lanes), duration=total)
    return path
