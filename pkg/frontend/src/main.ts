// Page wiring: DOM events -> controller/client, responses -> renderers.

import { Direction, MvretClient, SweepResponse } from './api.js';
import { RetrieveController } from './controller.js';
import { CurveSpec, legendHtml, resultListHtml, sweepSvg } from './render.js';

const $ = <T extends HTMLElement>(id: string): T => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
};

const DEFAULT_BASE_URL = 'http://127.0.0.1:8765';

const baseUrlInput = $<HTMLInputElement>('base-url');
const querySelect = $<HTMLSelectElement>('query-select');
const directionSelect = $<HTMLSelectElement>('direction-select');
const alphaSlider = $<HTMLInputElement>('alpha-slider');
const alphaValue = $<HTMLSpanElement>('alpha-value');
const kInput = $<HTMLInputElement>('k-input');
const resultList = $<HTMLUListElement>('result-list');
const resultStatus = $<HTMLSpanElement>('result-status');
const sweepContainer = $<HTMLDivElement>('sweep-container');
const sweepLegend = $<HTMLDivElement>('sweep-legend');
const sweepStatus = $<HTMLSpanElement>('sweep-status');
const errorBanner = $<HTMLDivElement>('error-banner');
const errorText = $<HTMLSpanElement>('error-text');
const retryButton = $<HTMLButtonElement>('retry-button');
const metaLine = $<HTMLSpanElement>('meta-line');

const client = new MvretClient(baseUrlInput.value || DEFAULT_BASE_URL);
let sweepCurves: CurveSpec[] = [];

function showError(message: string): void {
    errorText.textContent = message;
    errorBanner.classList.remove('hidden');
}

function clearError(): void {
    errorBanner.classList.add('hidden');
}

const controller = new RetrieveController(client, {
    onResults: (response) => {
        clearError();
        resultList.innerHTML = resultListHtml(response.results);
        resultStatus.textContent =
            `${response.results.length} results — ${response.direction} at alpha ${response.alpha.toFixed(2)}`;
    },
    onError: (message) => showError(message),
    onPending: () => {
        resultStatus.textContent = 'loading…';
    },
});

function currentSpec() {
    return {
        queryId: querySelect.value,
        direction: directionSelect.value as Direction,
        alpha: Number(alphaSlider.value),
        k: Math.max(1, Number(kInput.value) || 10),
    };
}

function refresh(settled: boolean): void {
    if (!querySelect.value) return;
    if (settled) controller.requestNow(currentSpec());
    else controller.request(currentSpec());
}

function renderSweep(): void {
    if (sweepCurves.length === 0) return;
    sweepContainer.innerHTML = sweepSvg(sweepCurves, Number(alphaSlider.value));
    sweepLegend.innerHTML = legendHtml(sweepCurves);
}

async function loadSweep(): Promise<void> {
    const direction = directionSelect.value as Direction;
    sweepStatus.textContent = 'loading sweep…';
    try {
        const [ssl, genre]: SweepResponse[] = await Promise.all([
            client.sweep('ssl', direction),
            client.sweep('genre', direction),
        ]);
        sweepCurves = [
            { label: `exact-pair ${ssl.metric}`, color: '#2563eb', points: ssl.points },
            { label: `same-genre ${genre.metric}`, color: '#dc2626', points: genre.points },
        ];
        sweepStatus.textContent = '';
        renderSweep();
    } catch (err) {
        sweepCurves = [];
        sweepContainer.innerHTML = '';
        sweepLegend.innerHTML = '';
        sweepStatus.textContent = err instanceof Error ? err.message : String(err);
    }
}

async function loadCorpus(): Promise<void> {
    clearError();
    try {
        const meta = await client.meta();
        metaLine.textContent =
            `${meta.corpus_size} items (${meta.split}), ${meta.class_names.length} genres, ` +
            `embed dim ${meta.embed_dim}, trained at alpha ${meta.train_alpha}`;
        const page = await client.items({ limit: meta.corpus_size });
        querySelect.innerHTML = page.items
            .map((item) => `<option value="${item.id}">${item.id} — ${item.genre}</option>`)
            .join('');
        refresh(true);
        void loadSweep();
    } catch (err) {
        showError(err instanceof Error ? err.message : String(err));
    }
}

alphaSlider.addEventListener('input', () => {
    alphaValue.textContent = Number(alphaSlider.value).toFixed(2);
    renderSweep();
    refresh(false);
});
querySelect.addEventListener('change', () => refresh(true));
directionSelect.addEventListener('change', () => {
    refresh(true);
    void loadSweep();
});
kInput.addEventListener('change', () => refresh(true));
baseUrlInput.addEventListener('change', () => {
    client.setBaseUrl(baseUrlInput.value || DEFAULT_BASE_URL);
    void loadCorpus();
});
retryButton.addEventListener('click', () => void loadCorpus());

alphaValue.textContent = Number(alphaSlider.value).toFixed(2);
void loadCorpus();
