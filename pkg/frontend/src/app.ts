import { ApiClient } from './client';
import { TaskSession, describeSubmitError } from './session';
import { auditView, flagDashboard, notFoundState, retryBanner, reviewTaskView } from './views';
import { shortHash } from './format';
import type { TasksDoc } from './types';

// Browser wiring: hash routing, a 2 s poll of pipeline status, and event
// delegation into the pure views. All truth lives server-side; this file
// only moves documents around.

const POLL_MS = 2000;

interface AppState {
    client: ApiClient;
    root: HTMLElement;
    tasksDoc: TasksDoc | null;
    session: TaskSession | null;
    selectedGroup: string | null;
    progress: Record<string, 'open' | 'done'>;
    names: Record<string, string>;
    notice: string;
}

function route(): string[] {
    return window.location.hash.replace(/^#/, '').split('/').filter(Boolean);
}

async function render(state: AppState): Promise<void> {
    const [page, credential, group] = route();
    const notice = state.notice ? `<div class="banner">${state.notice}</div>` : '';
    state.notice = '';
    try {
        if (page === 'task' && credential) {
            const doc = await state.client.tasks(credential);
            const selected = group ?? doc.tasks[0]?.group ?? '';
            if (state.session?.task.credential !== credential
                || state.session.task.group !== selected
                || state.tasksDoc?.dataset_hash !== doc.dataset_hash) {
                const task = doc.tasks.find((t) => t.group === selected);
                state.session = task ? new TaskSession(task) : null;
            }
            state.tasksDoc = doc;
            state.selectedGroup = selected;
            state.names[doc.credential] = doc.credential_name;
            state.root.innerHTML = notice + (state.session
                ? reviewTaskView(doc, selected, state.session)
                : notFoundState(`no review task for group '${selected}'`));
            return;
        }
        if (page === 'audit' && credential) {
            state.root.innerHTML = notice + auditView(await state.client.audit(credential));
            return;
        }
        const flags = await state.client.currentFlags();
        state.root.innerHTML = notice + flagDashboard(flags, state.names, state.progress);
    } catch (error) {
        const failure = describeSubmitError(error);
        state.root.innerHTML = failure.kind === 'other'
            ? retryBanner(failure.message)
            : notice + notFoundState(failure.message);
    }
}

async function submit(state: AppState): Promise<void> {
    const { client, session, tasksDoc } = state;
    if (!session || !tasksDoc || !session.canSubmit()) return;
    if (session.submitKind() === 'confirm') {
        state.progress[tasksDoc.credential] = 'done';
        state.notice = 'labels confirmed unchanged; nothing to submit';
        window.location.hash = '#dashboard';
        return;
    }
    try {
        const result = await client.submitRevisions(session.buildSubmission(
            tasksDoc.iteration, client.annotatorId, tasksDoc.dataset_hash));
        state.progress[tasksDoc.credential] = 'done';
        state.session = null;
        state.notice = `review accepted: ${result.applied} change(s), `
            + `dataset now ${shortHash(result.dataset_hash)}`;
        window.location.hash = '#dashboard';
    } catch (error) {
        const failure = describeSubmitError(error);
        if (failure.kind === 'conflict') {
            state.session = null; // force a reload of the task from the server
        }
        state.notice = failure.message;
        await render(state);
    }
}

function wire(state: AppState): void {
    state.root.addEventListener('click', (event) => {
        const target = event.target as HTMLElement;
        const chip = target.closest<HTMLElement>('.chip');
        if (chip && state.session) {
            state.session.toggle(chip.dataset.exp ?? '', chip.dataset.code ?? '');
            void render(state);
            return;
        }
        if (target.dataset.action === 'submit') void submit(state);
        if (target.dataset.action === 'retry') void render(state);
    });
    state.root.addEventListener('change', (event) => {
        const target = event.target as HTMLInputElement;
        if (target.dataset.action === 'confirm-unchanged' && state.session) {
            state.session.confirmedUnchanged = target.checked;
            void render(state);
        }
    });
    state.root.addEventListener('input', (event) => {
        const target = event.target as HTMLTextAreaElement;
        if (target.tagName === 'TEXTAREA' && state.session) {
            state.session.setRationale(
                target.dataset.exp ?? '', target.dataset.code ?? '', target.value);
            const button = state.root.querySelector<HTMLButtonElement>('[data-action=submit]');
            if (button) button.disabled = !state.session.canSubmit();
        }
    });
    window.addEventListener('hashchange', () => void render(state));
}

export function boot(baseUrl: string, rootId = 'app'): void {
    const root = document.getElementById(rootId);
    if (!root) throw new Error(`no #${rootId} element to mount on`);
    const annotatorId = window.prompt('annotator id for this session') ?? '';
    if (!annotatorId.trim()) {
        root.innerHTML = retryBanner('an annotator id is required to review');
        return;
    }
    const state: AppState = {
        client: new ApiClient(baseUrl, annotatorId.trim()),
        root,
        tasksDoc: null,
        session: null,
        selectedGroup: null,
        progress: {},
        names: {},
        notice: '',
    };
    wire(state);
    void render(state);
    // poll retrain status; re-render the dashboard when an iteration seals
    let retraining = false;
    window.setInterval(async () => {
        try {
            const health = await state.client.health();
            if (retraining && !health.retraining && route()[0] !== 'task') {
                await render(state);
            }
            retraining = health.retraining;
        } catch {
            // leave the current view; the next interaction shows the retry banner
        }
    }, POLL_MS);
}

declare global {
    interface Window {
        credloopBoot?: typeof boot;
    }
}

if (typeof document !== 'undefined') {
    window.credloopBoot = boot;
}
