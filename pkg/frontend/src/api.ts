// Typed client for the mvret retrieval service. The UI never computes
// rankings itself; every displayed number comes from one of these responses.

export interface Meta {
    audio_dim: number;
    video_dim: number;
    embed_dim: number;
    class_names: string[];
    corpus_size: number;
    split: string;
    seed: number;
    train_alpha: number;
    temperature: number;
}

export interface Item {
    id: string;
    genre: string;
    split: string;
}

export interface ItemsPage {
    total: number;
    items: Item[];
}

export interface RetrieveResult {
    id: string;
    score: number;
    genre: string;
    same_pair: boolean;
    same_genre: boolean;
}

export interface RetrieveResponse {
    query_id: string;
    direction: string;
    alpha: number;
    results: RetrieveResult[];
}

export interface SweepPoint {
    alpha: number;
    value: number;
}

export interface SweepResponse {
    protocol: string;
    direction: string;
    metric: string;
    points: SweepPoint[];
}

export type Direction = 'v2m' | 'm2v';
export type FetchFn = (url: string) => Promise<Response>;

export class ApiError extends Error {
    constructor(readonly status: number, message: string) {
        super(message);
    }
}

export class MvretClient {
    constructor(
        private baseUrl: string,
        private fetchFn: FetchFn = (url) => fetch(url),
    ) {}

    setBaseUrl(url: string): void {
        this.baseUrl = url.replace(/\/+$/, '');
    }

    getBaseUrl(): string {
        return this.baseUrl;
    }

    private async get<T>(path: string, params?: Record<string, string | number>): Promise<T> {
        let url = this.baseUrl + path;
        if (params) {
            const qs = new URLSearchParams();
            for (const [key, value] of Object.entries(params)) {
                qs.set(key, String(value));
            }
            url += '?' + qs.toString();
        }
        let response: Response;
        try {
            response = await this.fetchFn(url);
        } catch (err) {
            throw new ApiError(0, `service unreachable at ${this.baseUrl}`);
        }
        if (!response.ok) {
            let detail = response.statusText;
            try {
                const body = await response.json();
                if (body && body.detail) detail = String(body.detail);
            } catch {
                // non-JSON error body; keep the status text
            }
            throw new ApiError(response.status, detail);
        }
        return response.json() as Promise<T>;
    }

    meta(): Promise<Meta> {
        return this.get<Meta>('/meta');
    }

    items(options: { class?: string; limit?: number; offset?: number } = {}): Promise<ItemsPage> {
        const params: Record<string, string | number> = {};
        if (options.class !== undefined) params['class'] = options.class;
        if (options.limit !== undefined) params['limit'] = options.limit;
        if (options.offset !== undefined) params['offset'] = options.offset;
        return this.get<ItemsPage>('/items', params);
    }

    retrieve(queryId: string, direction: Direction, alpha: number, k: number): Promise<RetrieveResponse> {
        return this.get<RetrieveResponse>('/retrieve', {
            query_id: queryId,
            direction,
            alpha,
            k,
        });
    }

    sweep(protocol: 'ssl' | 'genre', direction: Direction): Promise<SweepResponse> {
        return this.get<SweepResponse>('/sweep', { protocol, direction });
    }
}
