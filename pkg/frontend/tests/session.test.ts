import { describe, expect, it } from 'vitest';

import { ApiError } from '../src/client';
import { TaskSession, describeSubmitError } from '../src/session';
import type { ReviewTaskDoc } from '../src/types';

function task(): ReviewTaskDoc {
    return {
        credential: 'L2_01',
        credential_name: 'Working with Others',
        group: 'beta',
        rate: 0.0368,
        samples: [
            {
                experience_id: 'e1',
                user_id: 'u1',
                group: 'beta',
                text: 'we included everyone in the plan',
                score: 0.91,
                predicted: true,
                annotated_leaves: ['L3_002'],
                top_leaf: 'L3_001',
            },
            {
                experience_id: 'e2',
                user_id: 'u2',
                group: 'beta',
                text: 'a second essay',
                score: 0.2,
                predicted: false,
                annotated_leaves: [],
                top_leaf: 'L3_001',
            },
        ],
    };
}

describe('TaskSession', () => {
    it('starts blocked: no changes and no explicit confirmation', () => {
        const session = new TaskSession(task());
        expect(session.changes()).toEqual([]);
        expect(session.submitKind()).toBe('blocked');
        expect(session.canSubmit()).toBe(false);
    });

    it('a toggle alone is still blocked until its rationale is written', () => {
        const session = new TaskSession(task());
        session.toggle('e1', 'L3_001');
        expect(session.changes()).toHaveLength(1);
        expect(session.submitKind()).toBe('blocked');
        expect(session.missingRationales()).toEqual([
            { experienceId: 'e1', code: 'L3_001' },
        ]);

        session.setRationale('e1', 'L3_001', 'essay shows inclusion');
        expect(session.submitKind()).toBe('post');
        expect(session.canSubmit()).toBe(true);
    });

    it('whitespace is not a rationale', () => {
        const session = new TaskSession(task());
        session.toggle('e1', 'L3_001');
        session.setRationale('e1', 'L3_001', '   ');
        expect(session.canSubmit()).toBe(false);
    });

    it('diffs against the served labels in both directions', () => {
        const session = new TaskSession(task());
        session.toggle('e1', 'L3_001'); // add
        session.toggle('e1', 'L3_002'); // remove a served label
        session.setRationale('e1', 'L3_001', 'matches the rubric');
        session.setRationale('e1', 'L3_002', 'does not match on re-read');
        expect(session.changes()).toEqual([
            { experience_id: 'e1', code: 'L3_001', action: 'added', rationale: 'matches the rubric' },
            { experience_id: 'e1', code: 'L3_002', action: 'removed', rationale: 'does not match on re-read' },
        ]);
    });

    it('toggling a change back off cancels it', () => {
        const session = new TaskSession(task());
        session.toggle('e2', 'L3_001');
        session.toggle('e2', 'L3_001');
        expect(session.changes()).toEqual([]);
    });

    it('confirm-unchanged unblocks an untouched task without a POST payload', () => {
        const session = new TaskSession(task());
        session.confirmedUnchanged = true;
        expect(session.submitKind()).toBe('confirm');
        expect(session.canSubmit()).toBe(true);
    });

    it('an edit withdraws the unchanged confirmation', () => {
        const session = new TaskSession(task());
        session.confirmedUnchanged = true;
        session.toggle('e1', 'L3_001');
        expect(session.confirmedUnchanged).toBe(false);
        expect(session.submitKind()).toBe('blocked');
    });

    it('builds the submission the service expects', () => {
        const session = new TaskSession(task());
        session.toggle('e1', 'L3_001');
        session.setRationale('e1', 'L3_001', 'clear rubric match');
        expect(session.buildSubmission(3, 'ann_7', 'hash123')).toEqual({
            iteration: 3,
            annotator: 'ann_7',
            base_version: 'hash123',
            actions: [{
                experience_id: 'e1',
                code: 'L3_001',
                action: 'added',
                rationale: 'clear rubric match',
            }],
        });
    });
});

describe('describeSubmitError', () => {
    it('409 asks for a reload instead of silently merging', () => {
        const failure = describeSubmitError(new ApiError(409, 'corpus changed since this review was exported'));
        expect(failure.kind).toBe('conflict');
        expect(failure.message).toContain('Reload');
    });

    it('400 surfaces the offending action text inline', () => {
        const detail = "action 1 (added 'L3_001' on 'e2'): rationale must be non-empty";
        const failure = describeSubmitError(new ApiError(400, detail));
        expect(failure.kind).toBe('invalid');
        expect(failure.message).toBe(detail);
    });

    it('503 reports the running retrain', () => {
        expect(describeSubmitError(new ApiError(503, 'an iteration is running')).kind)
            .toBe('unavailable');
    });

    it('anything else degrades to a generic failure', () => {
        expect(describeSubmitError(new Error('socket hang up')).kind).toBe('other');
    });
});
