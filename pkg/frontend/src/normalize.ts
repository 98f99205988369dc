/**
 * Canonical text key: trim, collapse internal whitespace, lowercase.
 *
 * The Python loader applies `" ".join(text.split()).lower()`; this must
 * produce the same bytes so embedding-table keys agree across the two sides.
 */
export function normalizeText(text: string): string {
  return text
    .split(/\s+/u)
    .filter(Boolean)
    .join(" ")
    .toLowerCase();
}
