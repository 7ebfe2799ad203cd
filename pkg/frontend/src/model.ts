/**
 * Pure view-model logic: everything here is a function of service
 * responses and form inputs. The console does no financial arithmetic;
 * numbers shown to the user are service values, at most trimmed for
 * display.
 */

import type { PositionView, Report, ServiceConfig, Status } from "./api.js";

export interface SliderBounds {
  min: number;
  /** axis maximum shown on the slider: the theoretical cap */
  displayMax: number;
  /** largest target the service will accept (cap less safety margin) */
  submitMax: number;
}

export function sliderBounds(config: ServiceConfig): SliderBounds {
  return {
    min: 1,
    displayMax: config.theoretical_max_leverage,
    submitMax: config.max_target_leverage,
  };
}

const BADGE_CLASS: Record<Status, string> = {
  Healthy: "badge-healthy",
  MarginCall: "badge-margin-call",
  Liquidatable: "badge-liquidatable",
  Liquidated: "badge-liquidated",
  Closed: "badge-closed",
};

export function statusBadge(status: Status): string {
  return BADGE_CLASS[status] ?? "badge-unknown";
}

/** Liquidated and Closed rows are terminal: lock them and disable actions. */
export function rowLocked(status: Status): boolean {
  return status === "Liquidated" || status === "Closed";
}

export function needsMarginAlert(report: Report): boolean {
  return report.status === "MarginCall";
}

export interface OpenFormInput {
  owner: string;
  collateral: string;
  leverage: string;
}

export interface Validation {
  ok: boolean;
  reason?: string;
}

const DECIMAL_RE = /^(?:\d+)(?:\.\d{1,18})?$/;

export function validateOpenForm(
  input: OpenFormInput,
  bounds: SliderBounds,
): Validation {
  if (!input.owner) {
    return { ok: false, reason: "pick an account" };
  }
  if (!input.collateral.trim()) {
    return { ok: false, reason: "collateral is required" };
  }
  if (!DECIMAL_RE.test(input.collateral.trim())) {
    return { ok: false, reason: "collateral must be a positive decimal" };
  }
  if (Number(input.collateral) <= 0) {
    return { ok: false, reason: "collateral must be above zero" };
  }
  const leverage = Number(input.leverage);
  if (!Number.isFinite(leverage) || leverage < bounds.min) {
    return { ok: false, reason: "leverage must be at least 1" };
  }
  if (leverage > bounds.submitMax) {
    return {
      ok: false,
      reason: `leverage above the allowed maximum ${bounds.submitMax.toFixed(2)}x`,
    };
  }
  return { ok: true };
}

/** Price steering input: strictly positive decimal, rejected client-side. */
export function validatePriceInput(text: string): Validation {
  if (!DECIMAL_RE.test(text.trim())) {
    return { ok: false, reason: "price must be a decimal number" };
  }
  if (Number(text) <= 0) {
    return { ok: false, reason: "price must be above zero" };
  }
  return { ok: true };
}

/**
 * At most one mutating request in flight: begin() returns false while a
 * prior action is pending, so a double-click issues exactly one request.
 */
export class PendingGuard {
  private pending = false;

  get busy(): boolean {
    return this.pending;
  }

  begin(): boolean {
    if (this.pending) {
      return false;
    }
    this.pending = true;
    return true;
  }

  end(): void {
    this.pending = false;
  }
}

/** Trim a decimal string for display; pure string surgery, no rounding. */
export function formatAmount(text: string, decimals = 4): string {
  const [whole, frac] = text.split(".");
  if (!frac || decimals === 0) {
    return whole ?? text;
  }
  const trimmed = frac.slice(0, decimals).replace(/0+$/, "");
  return trimmed ? `${whole}.${trimmed}` : (whole ?? text);
}

/** Positions sorted for the table: live first, then by id. */
export function tableOrder(positions: PositionView[]): PositionView[] {
  return [...positions].sort((a, b) => {
    const aLocked = rowLocked(a.report.status) ? 1 : 0;
    const bLocked = rowLocked(b.report.status) ? 1 : 0;
    return aLocked - bLocked || a.id - b.id;
  });
}
