// Browser wiring: fetch loop, DOM events, blocking overlay during the
// synchronous retrain. All rendering goes through the pure view functions;
// all session logic lives in state.ts and decide.ts.

import { ApiClient, ApiError } from "./api.js";
import {
  AppState,
  applyApplications,
  applyFeedbackResponse,
  applyMetrics,
  applySession,
  applyUndoResponse,
  beginMutation,
  closeTutorial,
  failMutation,
  initialState,
  showTutorial,
} from "./state.js";
import { DecideForm, buildFeedbackPayload, canSubmit, openDecide, setSlider, toggleUnfair } from "./decide.js";
import {
  renderApplicationsTable,
  renderBlockingOverlay,
  renderDecideModal,
  renderDeltaBadges,
  renderFairnessPanel,
  renderOverview,
  renderTutorial,
  renderTutorialButton,
} from "./views.js";

export class App {
  state: AppState = initialState();
  form: DecideForm | null = null;
  private seq = 0;

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    const session = await this.api.createSession();
    this.state = applySession(this.state, session);
    await this.refreshAll();
    this.render();
  }

  private nextSeq(): number {
    return ++this.seq;
  }

  private sessionId(): string {
    if (!this.state.session) throw new Error("no session");
    return this.state.session.session_id;
  }

  async refreshAll(): Promise<void> {
    try {
      const [metrics, apps] = await Promise.all([
        this.api.getMetrics(this.sessionId()),
        this.api.getApplications(this.sessionId(), {
          sort: this.state.sort ?? undefined,
          filters: this.state.filters,
        }),
      ]);
      this.state = applyMetrics(this.state, metrics, this.nextSeq());
      this.state = applyApplications(this.state, apps.applications, this.nextSeq());
    } catch (e) {
      // keep the last good table frozen and surface a banner instead
      const msg = e instanceof ApiError ? e.body.message : String(e);
      this.state = { ...this.state, error: msg };
    }
  }

  openDecideFor(appId: string): void {
    const row = this.state.applications.find((a) => a.id === appId);
    if (!row || row.locked) {
      // raced feedback locked it meanwhile: refuse and ask for a refresh
      this.state = { ...this.state, error: "application already judged; refresh" };
      this.render();
      return;
    }
    this.form = openDecide(appId, this.state.metrics?.feature_weights ?? {});
    this.render();
  }

  onToggleUnfair(on: boolean): void {
    if (this.form) {
      this.form = toggleUnfair(this.form, on);
      this.render();
    }
  }

  onSlider(feature: string, value: number): void {
    if (this.form) {
      this.form = setSlider(this.form, feature, value);
      this.render();
    }
  }

  cancelDecide(): void {
    this.form = null; // discard: no request is sent
    this.render();
  }

  async submitDecide(): Promise<void> {
    if (!this.form) return;
    const payload = buildFeedbackPayload(this.form);
    if (!payload) return;
    const pending = beginMutation(this.state);
    if (!pending) return; // one mutating request at a time
    this.state = pending;
    this.form = null;
    this.render();
    try {
      const response = await this.api.postFeedback(this.sessionId(), payload);
      this.state = applyFeedbackResponse(this.state, response, this.nextSeq());
      const apps = await this.api.getApplications(this.sessionId(), {
        sort: this.state.sort ?? undefined,
        filters: this.state.filters,
      });
      this.state = applyApplications(this.state, apps.applications, this.nextSeq());
    } catch (e) {
      const msg = e instanceof ApiError ? e.body.message : String(e);
      this.state = failMutation(this.state, msg);
    }
    this.render();
  }

  async undo(): Promise<void> {
    const pending = beginMutation(this.state);
    if (!pending) return;
    this.state = pending;
    this.render();
    try {
      const response = await this.api.postUndo(this.sessionId());
      this.state = applyUndoResponse(this.state, response, this.nextSeq());
      const apps = await this.api.getApplications(this.sessionId(), {
        sort: this.state.sort ?? undefined,
        filters: this.state.filters,
      });
      this.state = applyApplications(this.state, apps.applications, this.nextSeq());
    } catch (e) {
      const msg = e instanceof ApiError ? e.body.message : String(e);
      this.state = failMutation(this.state, msg);
    }
    this.render();
  }

  render(): void {
    const s = this.state;
    if (s.screen === "tutorial") {
      this.root.innerHTML = renderTutorial();
      this.bindTutorial();
      return;
    }
    const labels = s.session ? s.session.schema.map((f) => f.display_label) : [];
    const parts = [
      renderTutorialButton(),
      s.metrics ? renderOverview(s.metrics.overview) : "",
      Object.keys(s.deltas).length ? renderDeltaBadges(s.deltas) : "",
      s.metrics ? renderFairnessPanel(s.metrics) : "",
      renderApplicationsTable(s.applications, labels),
      `<button class="undo">Undo last feedback</button>`,
      s.error ? `<div class="error">${s.error} <button class="retry">Retry</button></div>` : "",
      this.form ? renderDecideModal(this.form, canSubmit(this.form)) : "",
      renderBlockingOverlay(s.pendingMutation),
    ];
    this.root.innerHTML = parts.join("\n");
    this.bind();
  }

  private bindTutorial(): void {
    this.root.querySelector(".close-tutorial")?.addEventListener("click", () => {
      this.state = closeTutorial(this.state);
      this.render();
    });
  }

  private bind(): void {
    this.root.querySelector(".tutorial-link")?.addEventListener("click", () => {
      this.state = showTutorial(this.state);
      this.render();
    });
    this.root.querySelectorAll("button.decide").forEach((btn) =>
      btn.addEventListener("click", () =>
        this.openDecideFor((btn as HTMLElement).dataset.app ?? ""),
      ),
    );
    this.root.querySelector("button.undo")?.addEventListener("click", () => void this.undo());
    const modal = this.root.querySelector(".decide-modal");
    if (modal) {
      modal.querySelector(".unfair-toggle input")?.addEventListener("change", (ev) => {
        this.onToggleUnfair((ev.target as HTMLInputElement).checked);
      });
      modal.querySelectorAll("input[type=range]").forEach((input) =>
        input.addEventListener("change", (ev) => {
          const el = ev.target as HTMLInputElement;
          this.onSlider(el.dataset.feature ?? "", Number(el.value));
        }),
      );
      modal.querySelector("button.ok")?.addEventListener("click", () => void this.submitDecide());
      modal.querySelector("button.cancel")?.addEventListener("click", () => this.cancelDecide());
    }
  }
}

export function mount(baseUrl: string, rootId = "app"): App {
  const root = document.getElementById(rootId);
  if (!root) throw new Error(`no #${rootId} element`);
  const app = new App(new ApiClient(baseUrl), root);
  void app.start();
  return app;
}
