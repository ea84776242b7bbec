// Shapes of the documents the pipeline service serves. The UI never
// computes CSP numbers itself; it renders these fields as received.

export interface HealthDoc {
    schema_version: number;
    status: string;
    state: boolean;
    retraining: boolean;
}

export interface FlagDoc {
    credential: string;
    group_low: string;
    group_high: string;
    rate_low: number;
    rate_high: number;
    gap: number;
}

export interface FlagsDoc {
    schema_version: number;
    attribute: string;
    level: number;
    threshold: number;
    source: string;
    iteration: number | null;
    include_undisclosed: boolean;
    flags: FlagDoc[];
    dataset_hash: string;
    record_hash: string;
}

export interface IterationRow {
    iteration: number;
    dataset_hash: string;
    record_hash: string;
    created_at: string;
    flags: number;
    followups: FollowupDoc[];
}

export interface FollowupDoc {
    credential: string;
    group_low: string;
    group_high: string;
    gap_before: number;
    gap_after: number | null;
    status: 'resolved' | 'shrunk' | 'carried';
}

export interface IterationsDoc {
    schema_version: number;
    current_iteration: number;
    dataset_hash: string;
    retraining: boolean;
    iterations: IterationRow[];
}

export interface IterationStatusDoc {
    iteration: number;
    status: 'sealed' | 'running' | 'failed';
    error?: string;
    [key: string]: unknown;
}

export interface ReviewSampleDoc {
    experience_id: string;
    user_id: string;
    group: string;
    text: string;
    score: number;
    predicted: boolean;
    annotated_leaves: string[];
    top_leaf: string;
}

export interface ReviewTaskDoc {
    credential: string;
    credential_name: string;
    group: string;
    rate: number;
    samples: ReviewSampleDoc[];
}

export interface TasksDoc {
    schema_version: number;
    iteration: number;
    dataset_hash: string;
    bundle_dataset_hash: string;
    credential: string;
    credential_name: string;
    score_threshold: number;
    flags: FlagDoc[];
    tasks: ReviewTaskDoc[];
}

export interface RevisionActionDoc {
    experience_id: string;
    code: string;
    action: 'added' | 'removed';
    rationale: string;
}

export interface RevisionSubmissionDoc {
    iteration: number;
    annotator: string;
    base_version: string | null;
    actions: RevisionActionDoc[];
}

export interface ImportResultDoc {
    schema_version: number;
    applied: number;
    dataset_hash: string;
    iteration: number;
}

export interface CspEntryDoc {
    credential: string;
    group: string;
    awarded: number;
    eligible: number;
    rate: number;
}

export interface AuditIterationDoc {
    iteration: number;
    record_hash: string;
    rates: Record<string, CspEntryDoc>;
    flags: FlagDoc[];
}

export interface CspDiffRowDoc {
    group: string;
    before: number | null;
    after: number | null;
}

export interface CspDiffDoc {
    schema_version: number;
    credential: string;
    attribute: string;
    level: number;
    rows: CspDiffRowDoc[];
    gap_before: number;
    gap_after: number;
}

export interface AuditDoc {
    schema_version: number;
    credential: string;
    credential_name: string;
    level: number;
    iterations: AuditIterationDoc[];
    diffs: CspDiffDoc[];
    revisions_by_iteration: Record<string, number>;
}
