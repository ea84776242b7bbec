import { barWidth, escapeHtml, rate4, shortHash, signed4 } from './format';
import type { TaskSession } from './session';
import type { AuditDoc, FlagDoc, FlagsDoc, TasksDoc } from './types';

// Every view is a pure HTML-string builder over server documents; a hard
// refresh rebuilds exactly what the GET endpoints serve.

export type TaskProgress = Record<string, 'open' | 'done'>;

function flagCard(flag: FlagDoc, threshold: number, name: string, status: string): string {
    return `
    <article class="flag-card" data-credential="${escapeHtml(flag.credential)}">
        <header>
            <h2>${escapeHtml(flag.credential)} ${escapeHtml(name)}</h2>
            <span class="status status-${status}">${status}</span>
        </header>
        <div class="bars">
            <div class="bar-row">
                <span class="bar-label">${escapeHtml(flag.group_high)}</span>
                <div class="bar"><div class="bar-fill" style="width: ${barWidth(flag.rate_high)}"></div></div>
                <span class="bar-value">${rate4(flag.rate_high)}</span>
            </div>
            <div class="bar-row">
                <span class="bar-label">${escapeHtml(flag.group_low)}</span>
                <div class="bar"><div class="bar-fill" style="width: ${barWidth(flag.rate_low)}"></div></div>
                <span class="bar-value">${rate4(flag.rate_low)}</span>
            </div>
            <div class="threshold-line" style="left: ${barWidth(threshold)}" title="threshold ${rate4(threshold)}"></div>
        </div>
        <p class="gap">gap ${rate4(flag.gap)} (threshold ${rate4(threshold)})</p>
        <nav>
            <a href="#task/${encodeURIComponent(flag.credential)}">review tasks</a>
            <a href="#audit/${encodeURIComponent(flag.credential)}">audit history</a>
        </nav>
    </article>`;
}

export function flagDashboard(
    doc: FlagsDoc,
    names: Record<string, string> = {},
    progress: TaskProgress = {},
): string {
    if (doc.flags.length === 0) {
        return `<div class="empty-state">no credentials of concern at level ${doc.level}
            (threshold ${rate4(doc.threshold)})</div>`;
    }
    const ordered = [...doc.flags].sort((a, b) => b.gap - a.gap);
    const cards = ordered
        .map((f) => flagCard(f, doc.threshold, names[f.credential] ?? '', progress[f.credential] ?? 'open'))
        .join('\n');
    return `
    <section class="dashboard">
        <p class="meta">iteration ${doc.iteration ?? '-'} &middot; attribute ${escapeHtml(doc.attribute)}
            &middot; dataset ${shortHash(doc.dataset_hash)}</p>
        ${cards}
    </section>`;
}

export function retryBanner(message: string): string {
    return `<div class="banner banner-error">service unreachable: ${escapeHtml(message)}
        <button data-action="retry">retry</button></div>`;
}

function groupFilter(doc: TasksDoc, selected: string): string {
    // one demographic group reviewed at a time, so the filter is single-select
    const options = doc.tasks
        .map((t) => {
            const active = t.group === selected ? ' class="active"' : '';
            return `<a href="#task/${encodeURIComponent(doc.credential)}/${encodeURIComponent(t.group)}"${active}>
                ${escapeHtml(t.group)} (${rate4(t.rate)})</a>`;
        })
        .join('\n');
    return `<nav class="group-filter" data-single-select="true">${options}</nav>`;
}

export function reviewTaskView(doc: TasksDoc, selected: string, session: TaskSession): string {
    const task = doc.tasks.find((t) => t.group === selected);
    if (!task) {
        return `<div class="empty-state">no review task for group ${escapeHtml(selected)}</div>`;
    }
    const samples = task.samples
        .map((sample) => {
            const codes = [...new Set([...sample.annotated_leaves, sample.top_leaf])].sort();
            const chips = codes
                .map((code) => {
                    const on = session.has(sample.experience_id, code);
                    return `<button class="chip${on ? ' chip-on' : ''}"
                        data-exp="${escapeHtml(sample.experience_id)}" data-code="${escapeHtml(code)}">
                        ${escapeHtml(code)}</button>`;
                })
                .join('\n');
            const pending = session
                .changes()
                .filter((a) => a.experience_id === sample.experience_id)
                .map(
                    (a) => `
                <label class="rationale">
                    <span>${a.action} ${escapeHtml(a.code)} &mdash; rationale required</span>
                    <textarea data-exp="${escapeHtml(a.experience_id)}"
                        data-code="${escapeHtml(a.code)}"
                        placeholder="why this label changed">${escapeHtml(a.rationale)}</textarea>
                </label>`,
                )
                .join('\n');
            return `
        <article class="sample" data-exp="${escapeHtml(sample.experience_id)}">
            <p class="essay">${escapeHtml(sample.text)}</p>
            <p class="model">model score ${rate4(sample.score)}
                ${sample.predicted ? '(predicted)' : '(not predicted)'}
                &middot; strongest leaf ${escapeHtml(sample.top_leaf)}</p>
            <div class="chips">${chips}</div>
            ${pending}
        </article>`;
        })
        .join('\n');
    const disabled = session.canSubmit() ? '' : ' disabled';
    return `
    <section class="task-view">
        <header class="group-banner">
            <h2>${escapeHtml(doc.credential)} ${escapeHtml(doc.credential_name)}</h2>
            <p>reviewing group <strong>${escapeHtml(task.group)}</strong>
                &middot; award rate ${rate4(task.rate)}
                &middot; score threshold ${rate4(doc.score_threshold)}</p>
        </header>
        ${groupFilter(doc, selected)}
        ${samples}
        <footer class="submit-row">
            <label><input type="checkbox" data-action="confirm-unchanged"
                ${session.confirmedUnchanged ? 'checked' : ''}/> labels are correct as served</label>
            <button data-action="submit"${disabled}>submit review</button>
        </footer>
    </section>`;
}

export function auditView(doc: AuditDoc): string {
    const header = `<h2>${escapeHtml(doc.credential)} ${escapeHtml(doc.credential_name)}</h2>`;
    if (doc.iterations.length < 2) {
        return `
    <section class="audit-view">
        ${header}
        <div class="empty-state">only one iteration sealed so far; the before/after
            table appears once a retrain lands</div>
    </section>`;
    }
    const tables = doc.diffs
        .map((diff, i) => {
            const rows = diff.rows
                .map((row) => {
                    const before = row.before === null ? '-' : rate4(row.before);
                    const after = row.after === null ? '-' : rate4(row.after);
                    const change =
                        row.before === null || row.after === null
                            ? '-'
                            : signed4(row.after - row.before);
                    return `<tr><td>${escapeHtml(row.group)}</td>
                        <td>${before}</td><td>${after}</td><td>${change}</td></tr>`;
                })
                .join('\n');
            return `
        <table class="csp-diff">
            <caption>iteration ${doc.iterations[i]?.iteration} &rarr; ${doc.iterations[i + 1]?.iteration}</caption>
            <thead><tr><th>group</th><th>before</th><th>after</th><th>change</th></tr></thead>
            <tbody>${rows}</tbody>
            <tfoot><tr><td colspan="4">max gap ${rate4(diff.gap_before)} &rarr; ${rate4(diff.gap_after)}</td></tr></tfoot>
        </table>`;
        })
        .join('\n');
    const revisions = Object.entries(doc.revisions_by_iteration)
        .map(([iteration, count]) => `iteration ${iteration}: ${count}`)
        .join(', ');
    return `
    <section class="audit-view">
        ${header}
        ${tables}
        <p class="revisions">label revisions &mdash; ${revisions || 'none'}</p>
    </section>`;
}

export function notFoundState(detail: string): string {
    return `<div class="empty-state">nothing here: ${escapeHtml(detail)}</div>`;
}
