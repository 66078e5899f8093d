// HTML builders for the result list and sweep panel. They return markup
// strings so the formatting logic is testable without a browser; main.ts
// assigns them to innerHTML.

import { RetrieveResult, SweepPoint } from './api.js';
import { DEFAULT_BOX, markerAt, seriesPath, xForAlpha, yForValue } from './sweep.js';

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;');
}

export function resultCardHtml(result: RetrieveResult, rank: number): string {
    const classes = ['card'];
    if (result.same_pair) classes.push('same-pair');
    else if (result.same_genre) classes.push('same-genre');
    const barWidth = Math.max(0, Math.min(1, (result.score + 1) / 2)) * 100;
    const tags = [
        result.same_pair ? '<span class="tag tag-pair">exact pair</span>' : '',
        result.same_genre && !result.same_pair ? '<span class="tag tag-genre">same genre</span>' : '',
    ].join('');
    return `<li class="${classes.join(' ')}">` +
        `<span class="rank">${rank}</span>` +
        `<span class="id">${escapeHtml(result.id)}</span>` +
        `<span class="genre-badge">${escapeHtml(result.genre)}</span>` +
        `${tags}` +
        `<span class="score">${result.score.toFixed(6)}</span>` +
        `<span class="score-bar"><span class="score-fill" style="width:${barWidth.toFixed(1)}%"></span></span>` +
        `</li>`;
}

export function resultListHtml(results: RetrieveResult[]): string {
    return results.map((r, i) => resultCardHtml(r, i + 1)).join('\n');
}

export interface CurveSpec {
    label: string;
    color: string;
    points: SweepPoint[];
}

export function sweepSvg(curves: CurveSpec[], sliderAlpha: number): string {
    const box = DEFAULT_BOX;
    const parts: string[] = [];
    parts.push(`<svg viewBox="0 0 ${box.width} ${box.height}" class="sweep-plot">`);
    // axes and gridlines at alpha ticks / value quarters
    for (let i = 0; i <= 10; i++) {
        const x = xForAlpha(i / 10, box);
        parts.push(`<line x1="${x.toFixed(1)}" y1="${box.padTop}" x2="${x.toFixed(1)}" ` +
            `y2="${box.height - box.padBottom}" class="grid"/>`);
        if (i % 2 === 0) {
            parts.push(`<text x="${x.toFixed(1)}" y="${box.height - 10}" ` +
                `class="tick">${(i / 10).toFixed(1)}</text>`);
        }
    }
    for (let v = 0; v <= 4; v++) {
        const y = yForValue(v / 4, box);
        parts.push(`<text x="6" y="${(y + 4).toFixed(1)}" class="tick">${(v / 4).toFixed(2)}</text>`);
    }
    for (const curve of curves) {
        parts.push(`<polyline points="${seriesPath(curve.points, box)}" ` +
            `fill="none" stroke="${curve.color}" stroke-width="2"/>`);
        for (const p of curve.points) {
            parts.push(`<circle cx="${xForAlpha(p.alpha, box).toFixed(1)}" ` +
                `cy="${yForValue(p.value, box).toFixed(1)}" r="2.5" fill="${curve.color}"/>`);
        }
        const marker = markerAt(curve.points, sliderAlpha, box);
        parts.push(`<circle cx="${marker.x.toFixed(1)}" cy="${marker.y.toFixed(1)}" r="5" ` +
            `fill="none" stroke="${curve.color}" stroke-width="2" class="marker"/>`);
    }
    const sliderX = xForAlpha(sliderAlpha, box);
    parts.push(`<line x1="${sliderX.toFixed(1)}" y1="${box.padTop}" x2="${sliderX.toFixed(1)}" ` +
        `y2="${box.height - box.padBottom}" class="slider-line"/>`);
    parts.push('</svg>');
    return parts.join('');
}

export function legendHtml(curves: CurveSpec[]): string {
    return curves
        .map((c) => `<span class="legend-item"><span class="swatch" ` +
            `style="background:${c.color}"></span>${escapeHtml(c.label)}</span>`)
        .join(' ');
}
