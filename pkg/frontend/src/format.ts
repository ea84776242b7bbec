// Display formatting only; all numbers arrive from the server.

export function rate4(value: number): string {
    return value.toFixed(4);
}

export function signed4(value: number): string {
    const text = value.toFixed(4);
    return value >= 0 ? `+${text}` : text;
}

export function shortHash(hash: string): string {
    return hash.slice(0, 12);
}

// Width of a CSP bar in percent of the card, clamped so tiny rates stay visible.
export function barWidth(rate: number): string {
    const pct = Math.max(1, Math.min(100, rate * 100));
    return `${pct.toFixed(2)}%`;
}

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;')
        .replace(/'/g, '&#39;');
}
