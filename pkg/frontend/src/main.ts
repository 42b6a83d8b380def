/**
 * Entry point: hash-routed single page app.
 *
 *   #/motifs           cluster browser (default)
 *   #/motifs/<id>      cluster detail
 *   #/annotate         imposter-question annotation flow
 *   #/admin            evaluation stats (not linked from the annotator flow)
 */

import { ApiClient } from "./api.js";
import { paginate, sortClustersBySize } from "./motifs.js";
import { SessionFlow } from "./session.js";
import {
  renderClusterDetail,
  renderError,
  renderMotifGrid,
  renderQuestion,
  renderStatsView,
} from "./view.js";

const PER_PAGE = 12;

interface Route {
  view: string;
  arg: string | null;
  params: URLSearchParams;
}

export function parseRoute(hash: string): Route {
  const [path, query = ""] = hash.replace(/^#\/?/, "").split("?");
  const parts = path.split("/").filter((p) => p.length > 0);
  return {
    view: parts[0] ?? "motifs",
    arg: parts[1] ?? null,
    params: new URLSearchParams(query),
  };
}

class App {
  private readonly api = new ApiClient();
  private flow: SessionFlow | null = null;
  private page = 0;

  constructor(private readonly root: HTMLElement) {}

  private label(route: Route): string | undefined {
    return route.params.get("label") ?? undefined;
  }

  async render(): Promise<void> {
    const route = parseRoute(window.location.hash);
    try {
      if (route.view === "annotate") {
        await this.renderAnnotate(route);
      } else if (route.view === "admin") {
        renderStatsView(this.root, await this.api.getStats(this.label(route)));
      } else if (route.arg !== null) {
        await this.renderDetail(route);
      } else {
        await this.renderGrid(route);
      }
    } catch (err) {
      renderError(this.root, err instanceof Error ? err.message : String(err));
    }
  }

  private imageUrlFn(label: string | undefined) {
    return (imageId: number) => this.api.imageUrl(imageId, label);
  }

  private async renderGrid(route: Route): Promise<void> {
    const listing = await this.api.getMotifs(this.label(route));
    const sorted = sortClustersBySize(listing.motifs);
    const draw = () => {
      renderMotifGrid(
        this.root,
        listing,
        paginate(sorted, this.page, PER_PAGE),
        this.imageUrlFn(listing.label),
        {
          onPage: (page) => {
            this.page = page;
            draw();
          },
          onOpen: (clusterId) => {
            window.location.hash = `#/motifs/${clusterId}?label=${encodeURIComponent(listing.label)}`;
          },
        },
      );
    };
    draw();
  }

  private async renderDetail(route: Route): Promise<void> {
    const listing = await this.api.getMotifs(this.label(route));
    const detail = await this.api.getMotifDetail(listing.label, Number(route.arg));
    renderClusterDetail(this.root, detail, this.imageUrlFn(listing.label), () => {
      window.location.hash = "#/motifs";
    });
  }

  private async renderAnnotate(route: Route): Promise<void> {
    if (this.flow === null) {
      this.flow = new SessionFlow(this.api, route.params.get("annotator") ?? "ui");
      await this.flow.start(this.label(route));
    }
    const draw = () => {
      const flow = this.flow as SessionFlow;
      renderQuestion(this.root, flow.state, this.imageUrlFn(this.label(route)), {
        onSelect: (position) => {
          flow.choose(position);
          draw();
        },
        onSubmit: () => {
          void flow.submit().then(draw);
        },
      });
    };
    draw();
  }
}

export function mount(root: HTMLElement): App {
  const app = new App(root);
  window.addEventListener("hashchange", () => void app.render());
  void app.render();
  return app;
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement !== null) {
  mount(rootElement);
}
