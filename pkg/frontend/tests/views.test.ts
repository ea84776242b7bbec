import { describe, expect, it } from 'vitest';

import { TaskSession } from '../src/session';
import { auditView, flagDashboard, notFoundState, retryBanner, reviewTaskView } from '../src/views';
import type { AuditDoc, FlagsDoc, TasksDoc } from '../src/types';

function flagsDoc(flags: FlagsDoc['flags']): FlagsDoc {
    return {
        schema_version: 1,
        attribute: 'race',
        level: 2,
        threshold: 0.05,
        source: 'predictions',
        iteration: 1,
        include_undisclosed: false,
        flags,
        dataset_hash: 'd'.repeat(64),
        record_hash: 'r'.repeat(64),
    };
}

describe('flagDashboard', () => {
    it('renders the served rate pair and gap digit-for-digit', () => {
        const html = flagDashboard(flagsDoc([{
            credential: 'L2_01',
            group_low: 'beta',
            group_high: 'alpha',
            rate_low: 0.0368,
            rate_high: 0.1049,
            gap: 0.06810000000000001, // as served: the float behind 0.0681
        }]), { L2_01: 'Working with Others' });
        expect(html).toContain('0.1049');
        expect(html).toContain('0.0368');
        expect(html).toContain('gap 0.0681');
        expect(html).toContain('threshold 0.0500');
        expect(html).toContain('Working with Others');
        expect(html).toContain('#task/L2_01');
    });

    it('lists a larger gap before a smaller one', () => {
        const html = flagDashboard(flagsDoc([
            {
                credential: 'L2_09', group_low: 'b', group_high: 'a',
                rate_low: 0.10, rate_high: 0.15, gap: 0.05,
            },
            {
                credential: 'L2_02', group_low: 'b', group_high: 'a',
                rate_low: 0.10, rate_high: 0.18, gap: 0.08,
            },
        ]));
        expect(html.indexOf('L2_02')).toBeLessThan(html.indexOf('L2_09'));
    });

    it('shows an explicit all-clear state for an empty flag set', () => {
        const html = flagDashboard(flagsDoc([]));
        expect(html).toContain('no credentials of concern');
    });

    it('reflects task completion status on the card', () => {
        const html = flagDashboard(flagsDoc([{
            credential: 'L2_01', group_low: 'b', group_high: 'a',
            rate_low: 0.1, rate_high: 0.2, gap: 0.1,
        }]), {}, { L2_01: 'done' });
        expect(html).toContain('status-done');
    });
});

function tasksDoc(): TasksDoc {
    return {
        schema_version: 1,
        iteration: 1,
        dataset_hash: 'd'.repeat(64),
        bundle_dataset_hash: 'd'.repeat(64),
        credential: 'L2_01',
        credential_name: 'Working with Others',
        score_threshold: 0.5,
        flags: [],
        tasks: [
            {
                credential: 'L2_01',
                credential_name: 'Working with Others',
                group: 'beta',
                rate: 0.0368,
                samples: [{
                    experience_id: 'e1',
                    user_id: 'u1',
                    group: 'beta',
                    text: 'we included <everyone> in the plan',
                    score: 0.91,
                    predicted: true,
                    annotated_leaves: ['L3_002'],
                    top_leaf: 'L3_001',
                }],
            },
            {
                credential: 'L2_01',
                credential_name: 'Working with Others',
                group: 'alpha',
                rate: 0.1049,
                samples: [],
            },
        ],
    };
}

describe('reviewTaskView', () => {
    it('banners the group under review and offers a single-select filter', () => {
        const doc = tasksDoc();
        const html = reviewTaskView(doc, 'beta', new TaskSession(doc.tasks[0]!));
        expect(html).toContain('reviewing group <strong>beta</strong>');
        expect(html).toContain('data-single-select="true"');
        expect(html).toContain('#task/L2_01/alpha');
        expect((html.match(/class="active"/g) ?? []).length).toBe(1);
    });

    it('escapes essay text and renders chips for served plus suggested leaves', () => {
        const doc = tasksDoc();
        const html = reviewTaskView(doc, 'beta', new TaskSession(doc.tasks[0]!));
        expect(html).toContain('we included &lt;everyone&gt; in the plan');
        expect(html).toContain('data-code="L3_002"');
        expect(html).toContain('data-code="L3_001"'); // model's strongest leaf
        expect(html).toContain('model score 0.9100');
    });

    it('disables submit until the session allows it', () => {
        const doc = tasksDoc();
        const session = new TaskSession(doc.tasks[0]!);
        expect(reviewTaskView(doc, 'beta', session)).toContain('data-action="submit" disabled');

        session.toggle('e1', 'L3_001');
        session.setRationale('e1', 'L3_001', 'inclusion is explicit');
        const html = reviewTaskView(doc, 'beta', session);
        expect(html).toContain('data-action="submit">');
        expect(html).not.toContain('data-action="submit" disabled');
        expect(html).toContain('rationale required');
    });
});

describe('auditView', () => {
    const base: AuditDoc = {
        schema_version: 1,
        credential: 'L2_01',
        credential_name: 'Working with Others',
        level: 2,
        iterations: [
            {
                iteration: 1,
                record_hash: 'a'.repeat(64),
                rates: {},
                flags: [],
            },
            {
                iteration: 2,
                record_hash: 'b'.repeat(64),
                rates: {},
                flags: [],
            },
        ],
        diffs: [{
            schema_version: 1,
            credential: 'L2_01',
            attribute: 'race',
            level: 2,
            rows: [
                { group: 'alpha', before: 0.1049, after: 0.1049 },
                { group: 'beta', before: 0.0368, after: 0.0743 },
            ],
            gap_before: 0.0681,
            gap_after: 0.0306,
        }],
        revisions_by_iteration: { '1': 57 },
    };

    it('renders the before/after table with iteration labels', () => {
        const html = auditView(base);
        expect(html).toContain('iteration 1 &rarr; 2');
        expect(html).toContain('0.0368');
        expect(html).toContain('0.0743');
        expect(html).toContain('max gap 0.0681 &rarr; 0.0306');
        expect(html).toContain('iteration 1: 57');
    });

    it('an unchanged group shows the identical value on both sides', () => {
        const html = auditView(base);
        expect((html.match(/0\.1049/g) ?? []).length).toBe(2);
        expect(html).toContain('+0.0000');
    });

    it('explains itself when only one iteration exists', () => {
        const single = { ...base, iterations: base.iterations.slice(0, 1), diffs: [] };
        const html = auditView(single);
        expect(html).toContain('only one iteration sealed so far');
    });
});

describe('error states', () => {
    it('unknown credential degrades to an empty state with the detail', () => {
        expect(notFoundState("unknown credential id 'NOPE'"))
            .toContain('unknown credential id &#39;NOPE&#39;');
    });

    it('unreachable service shows a retry banner, never stale numbers', () => {
        const html = retryBanner('fetch failed');
        expect(html).toContain('service unreachable');
        expect(html).toContain('data-action="retry"');
    });
});
