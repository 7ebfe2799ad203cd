/**
 * Browser bootstrap: one rendering loop polling the service (1s), one
 * in-flight mutation at a time, event delegation over the rendered
 * markup. All figures on screen come from the latest service response.
 */

import { ApiClient, ApiError, type ServiceConfig } from "./api.js";
import {
  PendingGuard,
  sliderBounds,
  validateOpenForm,
  validatePriceInput,
} from "./model.js";
import {
  renderAlerts,
  renderBanner,
  renderOpenForm,
  renderPositionsTable,
  renderScenarioPanel,
} from "./render.js";

const POLL_INTERVAL_MS = 1000;

interface Elements {
  openForm: HTMLElement;
  alerts: HTMLElement;
  positions: HTMLElement;
  scenario: HTMLElement;
  banner: HTMLElement;
}

export class Console {
  private readonly guard = new PendingGuard();
  private config: ServiceConfig | null = null;
  private stale = false;

  constructor(
    private readonly api: ApiClient,
    private readonly el: Elements,
  ) {}

  async start(): Promise<void> {
    this.config = await this.api.getConfig();
    this.el.openForm.innerHTML = renderOpenForm(this.config);
    this.wireOpenForm();
    this.wireActions();
    await this.refresh();
    window.setInterval(() => void this.refresh(), POLL_INTERVAL_MS);
  }

  private async refresh(): Promise<void> {
    try {
      const [state, positions] = await Promise.all([
        this.api.getState(),
        this.api.listPositions(),
      ]);
      this.stale = false;
      this.el.banner.innerHTML = renderBanner(false);
      this.el.positions.innerHTML = renderPositionsTable(positions);
      this.el.alerts.innerHTML = renderAlerts(positions);
      const steering = document.activeElement?.id === "steer-price";
      if (!steering) {
        this.el.scenario.innerHTML = renderScenarioPanel(state);
      }
    } catch (error) {
      if (!this.stale) {
        this.stale = true;
        this.el.banner.innerHTML = renderBanner(true, String(error));
      }
    }
  }

  private formError(id: string, message: string): void {
    const node = document.getElementById(id);
    if (node) {
      node.textContent = message;
    }
  }

  private wireOpenForm(): void {
    const form = document.getElementById("open-form") as HTMLFormElement | null;
    if (!form || !this.config) {
      return;
    }
    const bounds = sliderBounds(this.config);
    const collateral = document.getElementById("open-collateral") as HTMLInputElement;
    const leverage = document.getElementById("open-leverage") as HTMLInputElement;
    const output = document.getElementById("open-leverage-value") as HTMLOutputElement;
    const owner = document.getElementById("open-owner") as HTMLSelectElement;
    const submit = document.getElementById("open-submit") as HTMLButtonElement;

    const revalidate = () => {
      output.value = Number(leverage.value).toFixed(2);
      const verdict = validateOpenForm(
        { owner: owner.value, collateral: collateral.value, leverage: leverage.value },
        bounds,
      );
      submit.disabled = !verdict.ok;
      this.formError("open-error", verdict.ok ? "" : (verdict.reason ?? ""));
    };
    collateral.addEventListener("input", revalidate);
    leverage.addEventListener("input", revalidate);
    owner.addEventListener("change", revalidate);
    revalidate();

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.mutate(async () => {
        await this.api.openPosition({
          owner: owner.value,
          collateral: collateral.value.trim(),
          target_leverage: leverage.value,
        });
        this.formError("open-error", "");
      }, "open-error");
    });
  }

  private wireActions(): void {
    document.body.addEventListener("click", (event) => {
      const target = event.target as HTMLElement | null;
      const action = target?.dataset?.action;
      if (!action || action === "open") {
        return;
      }
      event.preventDefault();
      const positionId = Number(target?.dataset?.position ?? "0");
      if (action === "add-collateral") {
        const amount = window.prompt("Collateral to add (ETH)", "1");
        if (amount === null) {
          return;
        }
        void this.mutate(
          () => this.api.addCollateral(positionId, amount.trim()),
          "scenario-error",
        );
      } else if (action === "close") {
        void this.mutate(() => this.api.closePosition(positionId), "scenario-error");
      } else if (action === "steer-price") {
        const input = document.getElementById("steer-price") as HTMLInputElement | null;
        const text = input?.value ?? "";
        const verdict = validatePriceInput(text);
        if (!verdict.ok) {
          this.formError("scenario-error", verdict.reason ?? "invalid price");
          return;
        }
        void this.mutate(async () => {
          const state = await this.api.getState();
          await this.api.appendPriceStep(state.block_height + 1, text.trim());
        }, "scenario-error");
      } else if (action === "advance") {
        const input = document.getElementById("advance-blocks") as HTMLInputElement | null;
        const blocks = Math.max(1, Number(input?.value ?? "1") || 1);
        void this.mutate(() => this.api.advance(blocks), "scenario-error");
      }
    });
  }

  /** Run one mutation with the single-flight guard, then re-poll. */
  private async mutate(action: () => Promise<unknown>, errorSlot: string): Promise<void> {
    if (!this.guard.begin()) {
      return;
    }
    try {
      await action();
      this.formError(errorSlot, "");
    } catch (error) {
      const message =
        error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
      this.formError(errorSlot, message);
    } finally {
      this.guard.end();
      await this.refresh();
    }
  }
}

export function bootstrap(): void {
  const el: Elements = {
    openForm: document.getElementById("panel-open-form")!,
    alerts: document.getElementById("panel-alerts")!,
    positions: document.getElementById("panel-positions")!,
    scenario: document.getElementById("panel-scenario")!,
    banner: document.getElementById("panel-banner")!,
  };
  const base = (window as { LEVSIM_BASE_URL?: string }).LEVSIM_BASE_URL ?? "";
  void new Console(new ApiClient(base), el).start();
}

if (typeof document !== "undefined" && document.getElementById("panel-positions")) {
  bootstrap();
}
