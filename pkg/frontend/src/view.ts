/**
 * DOM rendering. Each render function rebuilds its root from a state value,
 * so the views stay a pure function of state and the session reducers keep
 * all the behavioural rules.
 */

import { EvalStats, MotifDetail, MotifListing } from "./api.js";
import { Page, formatPercent, statsSummary } from "./motifs.js";
import { MotifSummary } from "./api.js";
import { UiSessionState, canSubmit, progressLabel } from "./session.js";

export type ImageUrlFn = (imageId: number) => string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function clear(root: HTMLElement): void {
  while (root.firstChild) root.removeChild(root.firstChild);
}

export interface MotifGridHandlers {
  onPage: (page: number) => void;
  onOpen: (clusterId: number) => void;
}

export function renderMotifGrid(
  root: HTMLElement,
  listing: MotifListing,
  page: Page<MotifSummary>,
  imageUrl: ImageUrlFn,
  handlers: MotifGridHandlers,
): void {
  clear(root);
  root.appendChild(el("h2", "view-title", `Motifs — ${listing.label}`));

  const statsBox = el("ul", "stats-summary");
  for (const line of statsSummary(listing.stats)) {
    statsBox.appendChild(el("li", undefined, line));
  }
  root.appendChild(statsBox);

  const grid = el("div", "motif-grid");
  for (const motif of page.items) {
    const card = el("div", "motif-card");
    card.dataset.clusterId = String(motif.cluster_id);
    card.appendChild(el("h3", undefined, `Cluster ${motif.cluster_id}`));
    card.appendChild(el("p", "motif-size", `${motif.size} members`));
    const strip = el("div", "thumb-strip");
    for (const imageId of motif.top_members) {
      const img = el("img", "thumb");
      img.src = imageUrl(imageId);
      img.alt = `image ${imageId}`;
      strip.appendChild(img);
    }
    card.appendChild(strip);
    card.addEventListener("click", () => handlers.onOpen(motif.cluster_id));
    grid.appendChild(card);
  }
  root.appendChild(grid);

  const pager = el("div", "pager");
  const prev = el("button", "pager-prev", "Previous");
  prev.disabled = page.page === 0;
  prev.addEventListener("click", () => handlers.onPage(page.page - 1));
  const next = el("button", "pager-next", "Next");
  next.disabled = page.page >= page.pages - 1;
  next.addEventListener("click", () => handlers.onPage(page.page + 1));
  pager.appendChild(prev);
  pager.appendChild(el("span", "pager-label", `page ${page.page + 1} of ${page.pages}`));
  pager.appendChild(next);
  root.appendChild(pager);
}

export function renderClusterDetail(
  root: HTMLElement,
  detail: MotifDetail,
  imageUrl: ImageUrlFn,
  onBack: () => void,
): void {
  clear(root);
  const back = el("button", "back-link", "Back to motifs");
  back.addEventListener("click", onBack);
  root.appendChild(back);
  root.appendChild(el("h2", "view-title", `Cluster ${detail.cluster_id} — ${detail.size} members`));

  const list = el("ol", "member-list");
  detail.members.forEach((imageId, rank) => {
    const item = el("li", "member");
    const img = el("img", "member-image");
    img.src = imageUrl(imageId);
    img.alt = `image ${imageId}`;
    item.appendChild(img);
    item.appendChild(el("span", "member-score", detail.member_scores[rank].toFixed(3)));
    list.appendChild(item);
  });
  root.appendChild(list);
}

export interface QuestionHandlers {
  onSelect: (position: number) => void;
  onSubmit: () => void;
}

/**
 * The annotation view shows exactly the five images the server sent, in the
 * order it sent them, and gives no feedback about correctness. The submit
 * button is the only way forward and stays disabled until a pick is made.
 */
export function renderQuestion(
  root: HTMLElement,
  state: UiSessionState,
  imageUrl: ImageUrlFn,
  handlers: QuestionHandlers,
): void {
  clear(root);
  if (state.done) {
    const doneBox = el("div", "session-done");
    doneBox.appendChild(el("h2", "view-title", "Session complete"));
    doneBox.appendChild(
      el("p", undefined, `All ${state.total} questions answered. Thank you.`),
    );
    root.appendChild(doneBox);
    return;
  }
  if (state.question === null) {
    root.appendChild(el("p", "loading", "Loading question..."));
    return;
  }

  root.appendChild(el("h2", "view-title", "Which image does not belong?"));
  root.appendChild(el("p", "progress", progressLabel(state)));

  const slots = el("div", "question-slots");
  state.question.images.forEach((imageId, position) => {
    const slot = el("figure", position === state.selection ? "slot selected" : "slot");
    slot.dataset.position = String(position);
    slot.dataset.imageId = String(imageId);
    const img = el("img", "slot-image");
    img.src = imageUrl(imageId);
    img.alt = `candidate ${position + 1}`;
    slot.appendChild(img);
    slot.appendChild(el("figcaption", undefined, `${position + 1}`));
    slot.addEventListener("click", () => handlers.onSelect(position));
    slots.appendChild(slot);
  });
  root.appendChild(slots);

  const submit = el("button", "submit-answer", state.submitting ? "Submitting..." : "Submit");
  submit.disabled = !canSubmit(state);
  submit.addEventListener("click", handlers.onSubmit);
  root.appendChild(submit);

  if (state.error !== null) {
    root.appendChild(el("p", "error-banner", state.error));
  }
}

export function renderStatsView(root: HTMLElement, stats: EvalStats): void {
  clear(root);
  root.appendChild(el("h2", "view-title", `Evaluation — ${stats.config_label}`));
  const rows: Array<[string, string]> = [
    ["Sessions", String(stats.n_sessions)],
    ["Discarded", String(stats.sessions_discarded)],
    ["Scored answers", String(stats.n_scored)],
    ["Accuracy", stats.n_scored > 0 ? formatPercent(stats.accuracy) : "n/a"],
  ];
  const table = el("table", "stats-table");
  for (const [name, value] of rows) {
    const tr = el("tr");
    tr.appendChild(el("th", undefined, name));
    tr.appendChild(el("td", undefined, value));
    table.appendChild(tr);
  }
  root.appendChild(table);
}

export function renderError(root: HTMLElement, message: string): void {
  clear(root);
  root.appendChild(el("p", "error-banner", message));
}
