// Geometry helpers for the sweep panel: map (alpha, value) series into SVG
// coordinates and interpolate the live-slider marker between grid points.
// Pure functions, unit-tested without a DOM.

import { SweepPoint } from './api.js';

export interface PlotBox {
    width: number;
    height: number;
    padLeft: number;
    padRight: number;
    padTop: number;
    padBottom: number;
}

export const DEFAULT_BOX: PlotBox = {
    width: 420, height: 220, padLeft: 42, padRight: 12, padTop: 14, padBottom: 30,
};

export function xForAlpha(alpha: number, box: PlotBox): number {
    const inner = box.width - box.padLeft - box.padRight;
    return box.padLeft + alpha * inner;
}

export function yForValue(value: number, box: PlotBox): number {
    const inner = box.height - box.padTop - box.padBottom;
    return box.padTop + (1 - value) * inner;
}

/** SVG polyline points string for a series (values expected in [0, 1]). */
export function seriesPath(points: SweepPoint[], box: PlotBox = DEFAULT_BOX): string {
    return points
        .map((p) => `${xForAlpha(p.alpha, box).toFixed(1)},${yForValue(p.value, box).toFixed(1)}`)
        .join(' ');
}

/**
 * Linear interpolation of the series at an off-grid alpha, for the marker
 * tracking the live slider position.
 */
export function interpolate(points: SweepPoint[], alpha: number): number {
    if (points.length === 0) return 0;
    const sorted = [...points].sort((a, b) => a.alpha - b.alpha);
    const first = sorted[0];
    const last = sorted[sorted.length - 1];
    if (alpha <= first.alpha) return first.value;
    if (alpha >= last.alpha) return last.value;
    for (let i = 1; i < sorted.length; i++) {
        const lo = sorted[i - 1];
        const hi = sorted[i];
        if (alpha <= hi.alpha) {
            const t = (alpha - lo.alpha) / (hi.alpha - lo.alpha);
            return lo.value + t * (hi.value - lo.value);
        }
    }
    return last.value;
}

export interface MarkerPosition {
    x: number;
    y: number;
    value: number;
}

export function markerAt(points: SweepPoint[], alpha: number,
                         box: PlotBox = DEFAULT_BOX): MarkerPosition {
    const value = interpolate(points, alpha);
    return { x: xForAlpha(alpha, box), y: yForValue(value, box), value };
}
