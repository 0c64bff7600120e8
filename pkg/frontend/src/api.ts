import type {
  InspectResponse,
  OperatorAction,
  ProfileSummary,
  ResolveResponse,
  SessionRecord,
  TrainingConfig,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

export type NamedBlob = { name: string; blob: Blob };

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private baseUrl: string;
  private token: string;
  private fetchImpl: FetchLike;

  constructor(baseUrl: string, token: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.token = token;
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init: RequestInit = {}): Promise<T> {
    const headers = new Headers(init.headers);
    headers.set("Authorization", `Bearer ${this.token}`);
    const response = await this.fetchImpl(this.baseUrl + path, { ...init, headers });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (typeof body?.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  private json(body: unknown): RequestInit {
    return {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    };
  }

  async listProfiles(): Promise<ProfileSummary[]> {
    const data = await this.request<{ profiles: ProfileSummary[] }>("/profiles");
    return data.profiles;
  }

  async trainProfile(
    config: TrainingConfig,
    samples: NamedBlob[],
  ): Promise<{ profile_id: string; harness_type: string }> {
    const form = new FormData();
    form.append("config", JSON.stringify(config));
    for (const s of samples) form.append("files", s.blob, s.name);
    return this.request("/profiles", { method: "POST", body: form });
  }

  async createSession(
    operator: string,
    harnessType: string,
    profileId: string,
  ): Promise<SessionRecord> {
    return this.request(
      "/sessions",
      this.json({ operator, harness_type: harnessType, profile_id: profileId }),
    );
  }

  async listSessions(): Promise<SessionRecord[]> {
    const data = await this.request<{ sessions: SessionRecord[] }>("/sessions");
    return data.sessions;
  }

  async getSession(sessionId: string): Promise<SessionRecord> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  async closeSession(sessionId: string): Promise<SessionRecord> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/close`, {
      method: "POST",
    });
  }

  async inspect(sessionId: string, frames: NamedBlob[]): Promise<InspectResponse> {
    const form = new FormData();
    for (const f of frames) form.append("frames", f.blob, f.name);
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/inspect`, {
      method: "POST",
      body: form,
    });
  }

  async resolveEvent(
    sessionId: string,
    eventId: string,
    action: Exclude<OperatorAction, "none">,
  ): Promise<ResolveResponse> {
    const path =
      `/sessions/${encodeURIComponent(sessionId)}` +
      `/events/${encodeURIComponent(eventId)}/resolve`;
    return this.request(path, this.json({ action }));
  }
}
