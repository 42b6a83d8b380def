/**
 * Presentation helpers for the motif browser: ordering, pagination and
 * number formatting, kept separate from the DOM so they stay testable.
 */

import { MotifSummary, ReportStats } from "./api.js";

export interface Page<T> {
  items: T[];
  page: number;
  pages: number;
}

/** Largest clusters first; ties broken by cluster id for a stable layout. */
export function sortClustersBySize(motifs: MotifSummary[]): MotifSummary[] {
  return [...motifs].sort((a, b) => b.size - a.size || a.cluster_id - b.cluster_id);
}

export function paginate<T>(items: T[], page: number, perPage: number): Page<T> {
  if (perPage < 1) {
    throw new RangeError(`perPage must be positive, got ${perPage}`);
  }
  const pages = Math.max(1, Math.ceil(items.length / perPage));
  const clamped = Math.min(Math.max(page, 0), pages - 1);
  return {
    items: items.slice(clamped * perPage, (clamped + 1) * perPage),
    page: clamped,
    pages,
  };
}

export function formatPercent(fraction: number): string {
  return `${(fraction * 100).toFixed(1)}%`;
}

export function statsSummary(stats: ReportStats): string[] {
  const [q1, q2, q3] = stats.size_quartiles;
  return [
    `${stats.n_clusters} clusters over ${stats.n_components} components`,
    `sizes q1=${q1} median=${q2} q3=${q3} max=${stats.max_size}`,
    `${formatPercent(stats.frac_gt1)} of clusters have >1 member, ${formatPercent(stats.frac_gt3)} have >3`,
    `${stats.n_edges} similarity edges`,
  ];
}
