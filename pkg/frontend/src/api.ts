/**
 * Typed client for the simulator's HTTP/JSON API.
 *
 * Amounts stay as the decimal strings the service sends; the console
 * never converts them into numbers for arithmetic, only for display.
 */

export interface ServiceConfig {
  collateral_requirement: string;
  liquidation_ratio: string;
  liquidation_penalty: string;
  auction_discount: string;
  margin_call_buffer: string;
  pool_fee_bps: number;
  theoretical_max_leverage: number;
  effective_max_leverage: number;
  max_target_leverage: number;
  accounts: string[];
  auto_liquidation: boolean;
}

export type Status =
  | "Healthy"
  | "MarginCall"
  | "Liquidatable"
  | "Liquidated"
  | "Closed";

export interface Report {
  position_id: number;
  price: string;
  equity: string;
  pnl: string;
  collateralization: string | null;
  status: Status;
}

export interface PositionView {
  id: number;
  vault_id: number;
  owner: string;
  entry_price: string;
  initial_collateral: string;
  initial_equity: string;
  achieved_leverage: string;
  cumulative_costs: string;
  liquidation_price: string;
  opened_at: number;
  report: Report;
}

export interface StateView {
  block_height: number;
  price: string | null;
  digest: string;
}

export interface ReceiptView {
  success: boolean;
  gas_used: number;
  gas_paid: string;
  error: string | null;
  vault_id: number | null;
}

export interface OpenResponse {
  position: PositionView;
  plan: unknown;
  receipt: ReceiptView;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const fault = body as { code?: string; message?: string };
      throw new ApiError(
        response.status,
        fault.code ?? "Unknown",
        fault.message ?? response.statusText,
      );
    }
    return body as T;
  }

  getState(): Promise<StateView> {
    return this.request("/state");
  }

  getConfig(): Promise<ServiceConfig> {
    return this.request("/config");
  }

  listPositions(): Promise<PositionView[]> {
    return this.request("/positions");
  }

  getPosition(id: number): Promise<PositionView> {
    return this.request(`/positions/${id}`);
  }

  openPosition(body: {
    owner: string;
    collateral: string;
    target_leverage: string;
    slippage_tolerance?: string;
  }): Promise<OpenResponse> {
    return this.request("/positions", {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  addCollateral(
    id: number,
    amount: string,
  ): Promise<{ new_liquidation_price: string; receipt: ReceiptView }> {
    return this.request(`/positions/${id}/collateral`, {
      method: "POST",
      body: JSON.stringify({ amount }),
    });
  }

  closePosition(
    id: number,
  ): Promise<{ realized_equity: string; receipt: ReceiptView }> {
    return this.request(`/positions/${id}/close`, {
      method: "POST",
      body: JSON.stringify({}),
    });
  }

  advance(blocks: number): Promise<StateView> {
    return this.request("/scenario/advance", {
      method: "POST",
      body: JSON.stringify({ blocks }),
    });
  }

  appendPriceStep(height: number, price: string): Promise<StateView> {
    return this.request("/scenario/price", {
      method: "POST",
      body: JSON.stringify({ step: [height, price] }),
    });
  }

  replacePricePath(path: [number, string][]): Promise<StateView> {
    return this.request("/scenario/price", {
      method: "POST",
      body: JSON.stringify({ path }),
    });
  }
}
