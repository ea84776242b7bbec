import { afterEach, describe, expect, it, vi } from 'vitest';

import { ApiClient, ApiError } from '../src/client';

function jsonResponse(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { 'Content-Type': 'application/json' },
    });
}

afterEach(() => {
    vi.unstubAllGlobals();
});

describe('ApiClient', () => {
    it('sends the session annotator id as a header on every write', async () => {
        const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, {
            schema_version: 1, applied: 1, dataset_hash: 'h', iteration: 1,
        }));
        vi.stubGlobal('fetch', fetchMock);

        const client = new ApiClient('http://service:8000/', 'ann_42');
        const result = await client.submitRevisions({
            iteration: 1,
            annotator: 'ann_42',
            base_version: 'h0',
            actions: [{ experience_id: 'e1', code: 'L3_001', action: 'added', rationale: 'r' }],
        });

        expect(result.applied).toBe(1);
        const [url, init] = fetchMock.mock.calls[0]!;
        expect(url).toBe('http://service:8000/revisions');
        expect(init.method).toBe('POST');
        expect(init.headers['X-Annotator-Id']).toBe('ann_42');
        const body = JSON.parse(init.body as string);
        expect(body.base_version).toBe('h0');
        expect(body.actions).toHaveLength(1);
    });

    it('raises a typed error carrying the served detail', async () => {
        vi.stubGlobal('fetch', vi.fn().mockResolvedValue(
            jsonResponse(409, { detail: 'submission targets iteration 1, current is 2' })));

        const client = new ApiClient('http://service:8000', 'a');
        const error = await client.submitRevisions({
            iteration: 1, annotator: 'a', base_version: null, actions: [],
        }).catch((e: unknown) => e);

        expect(error).toBeInstanceOf(ApiError);
        expect((error as ApiError).status).toBe(409);
        expect((error as ApiError).detail).toContain('targets iteration 1');
    });

    it('builds the group-filtered task url', async () => {
        // a fresh Response per call; a body is only readable once
        const fetchMock = vi.fn().mockImplementation(async () => jsonResponse(200, { tasks: [] }));
        vi.stubGlobal('fetch', fetchMock);

        const client = new ApiClient('http://service:8000', 'a');
        await client.tasks('L2_01', 'beta');
        await client.tasks('L2_01');

        expect(fetchMock.mock.calls[0]![0]).toBe('http://service:8000/flags/L2_01/tasks?group=beta');
        expect(fetchMock.mock.calls[1]![0]).toBe('http://service:8000/flags/L2_01/tasks');
    });

    it('reads pipeline status documents', async () => {
        const fetchMock = vi.fn().mockResolvedValue(jsonResponse(200, {
            schema_version: 1, current_iteration: 2, dataset_hash: 'h',
            retraining: false, iterations: [],
        }));
        vi.stubGlobal('fetch', fetchMock);

        const client = new ApiClient('http://service:8000', 'a');
        const doc = await client.iterations();
        expect(doc.current_iteration).toBe(2);
        expect(fetchMock.mock.calls[0]![0]).toBe('http://service:8000/iterations');
    });
});
