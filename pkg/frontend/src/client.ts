import type {
    AuditDoc,
    FlagsDoc,
    HealthDoc,
    ImportResultDoc,
    IterationsDoc,
    IterationStatusDoc,
    RevisionSubmissionDoc,
    TasksDoc,
} from './types';

export class ApiError extends Error {
    readonly status: number;
    readonly detail: string;

    constructor(status: number, detail: string) {
        super(`HTTP ${status}: ${detail}`);
        this.status = status;
        this.detail = detail;
    }
}

async function parseDetail(response: Response): Promise<string> {
    try {
        const body = (await response.json()) as { detail?: unknown };
        if (typeof body.detail === 'string') return body.detail;
        return JSON.stringify(body.detail ?? body);
    } catch {
        return response.statusText;
    }
}

// Thin typed wrapper over the pipeline service. The annotator id given at
// session start rides along as the X-Annotator-Id header on every write.
export class ApiClient {
    readonly baseUrl: string;
    readonly annotatorId: string;

    constructor(baseUrl: string, annotatorId: string) {
        this.baseUrl = baseUrl.replace(/\/$/, '');
        this.annotatorId = annotatorId;
    }

    private async get<T>(path: string): Promise<T> {
        const response = await fetch(`${this.baseUrl}${path}`);
        if (!response.ok) {
            throw new ApiError(response.status, await parseDetail(response));
        }
        return (await response.json()) as T;
    }

    health(): Promise<HealthDoc> {
        return this.get('/health');
    }

    iterations(): Promise<IterationsDoc> {
        return this.get('/iterations');
    }

    currentFlags(): Promise<FlagsDoc> {
        return this.get('/iterations/current/flags');
    }

    iterationStatus(iteration: number): Promise<IterationStatusDoc> {
        return this.get(`/iterations/${iteration}`);
    }

    tasks(credential: string, group?: string): Promise<TasksDoc> {
        const query = group === undefined ? '' : `?group=${encodeURIComponent(group)}`;
        return this.get(`/flags/${encodeURIComponent(credential)}/tasks${query}`);
    }

    audit(credential: string): Promise<AuditDoc> {
        return this.get(`/audit/${encodeURIComponent(credential)}`);
    }

    async submitRevisions(submission: RevisionSubmissionDoc): Promise<ImportResultDoc> {
        const response = await fetch(`${this.baseUrl}/revisions`, {
            method: 'POST',
            headers: {
                'Content-Type': 'application/json',
                'X-Annotator-Id': this.annotatorId,
            },
            body: JSON.stringify(submission),
        });
        if (!response.ok) {
            throw new ApiError(response.status, await parseDetail(response));
        }
        return (await response.json()) as ImportResultDoc;
    }

    async startIteration(): Promise<IterationStatusDoc> {
        const response = await fetch(`${this.baseUrl}/iterations`, { method: 'POST' });
        if (!response.ok) {
            throw new ApiError(response.status, await parseDetail(response));
        }
        return (await response.json()) as IterationStatusDoc;
    }
}
