import { describe, expect, it } from 'vitest';

import { barWidth, escapeHtml, rate4, shortHash, signed4 } from '../src/format';

describe('rate4', () => {
    it('renders served rates at exactly four decimals', () => {
        expect(rate4(0.1049)).toBe('0.1049');
        expect(rate4(0.0368)).toBe('0.0368');
        expect(rate4(0.0743)).toBe('0.0743');
        expect(rate4(0.0681)).toBe('0.0681');
    });

    it('pads and truncates to display precision without rescaling', () => {
        expect(rate4(0)).toBe('0.0000');
        expect(rate4(1)).toBe('1.0000');
        expect(rate4(0.06810000000000001)).toBe('0.0681');
    });
});

describe('signed4', () => {
    it('marks direction explicitly, including zero', () => {
        expect(signed4(0.0104)).toBe('+0.0104');
        expect(signed4(-0.0323)).toBe('-0.0323');
        expect(signed4(0)).toBe('+0.0000');
    });
});

describe('barWidth', () => {
    it('maps a rate to a css percentage', () => {
        expect(barWidth(0.5)).toBe('50.00%');
        expect(barWidth(1)).toBe('100.00%');
    });

    it('keeps tiny and out-of-range values renderable', () => {
        expect(barWidth(0)).toBe('1.00%');
        expect(barWidth(2)).toBe('100.00%');
    });
});

describe('escapeHtml', () => {
    it('neutralises markup in essay text', () => {
        expect(escapeHtml('<b>&"\'</b>')).toBe('&lt;b&gt;&amp;&quot;&#39;&lt;/b&gt;');
    });
});

describe('shortHash', () => {
    it('abbreviates a dataset hash for display', () => {
        expect(shortHash('abcdef0123456789deadbeef')).toBe('abcdef012345');
    });
});
